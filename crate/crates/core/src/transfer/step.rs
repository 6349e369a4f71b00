//! Per-sample objective evaluation with gradient accumulation.

use crate::error::{data_err, Result};
use crate::geometry::{EquirectImage, RangeImage};

use super::loss::*;
use super::model::{TransferGrads, TransferParams};

/// Weights and margins of the generator objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub weights: TransferWeights,
    pub lambda1: f64,
    /// Weight of the paired L1 term between `ŷ` and the true range image,
    /// reported inside `recon`.
    pub range_weight: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            weights: TransferWeights::default(),
            lambda1: 0.5,
            range_weight: 10.0,
        }
    }
}

/// Generator objective on one paired sample. Accumulates generator gradients;
/// discriminator gradients are also touched and must be cleared by the caller
/// before its own update. Returns the loss report and `ŷ`.
pub fn generator_pass(
    params: &mut TransferParams,
    x: &EquirectImage,
    y: &RangeImage,
    label: usize,
    obj: &Objective,
) -> Result<(TransferLossReport, RangeImage)> {
    if y.values().len() != params.config.height * params.config.width {
        return data_err("range image has the wrong size");
    }
    let (out, tape) = params.forward_tape(x)?;
    let w = obj.weights;
    let xv = x.to_planar();
    let xh = out.x_hat.to_planar();
    let yv = y.values();
    let yh = out.y_hat.values();
    let (h, wd) = (params.config.height, params.config.width);

    let recon = loss_recon(&xv, &xh)? + obj.range_weight * loss_recon(yv, yh)?;
    let mut g = TransferGrads {
        x_hat: loss_recon_grad(&xv, &xh).into_iter().map(|v| v * w.recon).collect(),
        y_hat: loss_recon_grad(yv, yh).into_iter().map(|v| v * w.recon * obj.range_weight).collect(),
        ..Default::default()
    };

    let (fake, ftape) = params.discriminator.forward(yh, h, wd);
    let real = params.discriminator.forward(yv, h, wd).0;
    let (gan_d, gan_g) = loss_gan(&[real], &[fake])?;
    if w.gan != 0.0 {
        let gs = loss_gan_g_grad(&[fake])[0] * w.gan;
        let gy = params.discriminator.backward(&ftape, gs);
        g.y_hat.iter_mut().zip(&gy).for_each(|(a, b)| *a += b);
    }

    let proj = params.projection.value.clone();
    let mg = loss_mutual_grad(&out.z.z_g, &out.z_g_hat, &out.z.z_c, &proj, obj.lambda1);
    if w.mutual != 0.0 {
        g.z_g = mg.z_g.iter().map(|v| v * w.mutual).collect();
        g.z_g_hat = mg.z_g_hat.iter().map(|v| v * w.mutual).collect();
        g.z_c = mg.z_c.iter().map(|v| v * w.mutual).collect();
    }

    let classifier = loss_classifier(&out.cond_logits, label)?;
    if w.classifier != 0.0 {
        g.cond_logits = loss_classifier_grad(&out.cond_logits, label).into_iter().map(|v| v * w.classifier).collect();
    }
    params.backward(&tape, &g);
    let report = loss_transfer(recon, gan_g, gan_d, mg.value, classifier, &w);
    Ok((report, out.y_hat))
}

/// Discriminator objective on one real/fake pair; accumulates discriminator
/// gradients only and returns `gan_d`.
pub fn discriminator_pass(params: &mut TransferParams, real: &RangeImage, fake: &RangeImage) -> Result<f64> {
    let (h, w) = (params.config.height, params.config.width);
    for img in [real, fake] {
        if img.values().len() != h * w {
            return data_err("range image has the wrong size");
        }
    }
    let (sr, tr) = params.discriminator.forward(real.values(), h, w);
    let (sf, tf) = params.discriminator.forward(fake.values(), h, w);
    let (gan_d, _) = loss_gan(&[sr], &[sf])?;
    let (gr, gf) = loss_gan_d_grad(&[sr], &[sf]);
    params.discriminator.backward(&tr, gr[0]);
    params.discriminator.backward(&tf, gf[0]);
    Ok(gan_d)
}

/// Generator objective on one sample without touching gradients.
pub fn evaluate_objective(
    params: &TransferParams,
    x: &EquirectImage,
    y: &RangeImage,
    label: usize,
    obj: &Objective,
) -> Result<TransferLossReport> {
    if y.values().len() != params.config.height * params.config.width {
        return data_err("range image has the wrong size");
    }
    let (out, _) = params.forward_tape(x)?;
    let recon = loss_recon(&x.to_planar(), &out.x_hat.to_planar())? + obj.range_weight * loss_recon(y.values(), out.y_hat.values())?;
    let (gan_d, gan_g) = loss_gan(&[params.discriminate(y)?], &[params.discriminate(&out.y_hat)?])?;
    let mutual = loss_mutual(&out.z.z_g, &out.z_g_hat, &out.z.z_c, &params.projection.value, obj.lambda1)?;
    let classifier = loss_classifier(&out.cond_logits, label)?;
    Ok(loss_transfer(recon, gan_g, gan_d, mutual, classifier, &obj.weights))
}
