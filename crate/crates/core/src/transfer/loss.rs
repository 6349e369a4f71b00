//! Transfer objectives: reconstruction, adversarial, mutual-information
//! surrogate and condition classification, plus their gradients.

use crate::error::{data_err, Result};
use crate::nn::gemm;

/// Scores are clamped into this band before taking logarithms.
pub const SCORE_EPS: f64 = 1e-6;

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return data_err(format!("shape mismatch: {} vs {} values", a.len(), b.len()));
    }
    Ok(())
}

/// Mean absolute error.
pub fn loss_recon(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    same_len(x, x_hat)?;
    Ok(x.iter().zip(x_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

/// Gradient of [`loss_recon`] with respect to `x_hat` (zero at ties).
pub fn loss_recon_grad(x: &[f64], x_hat: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    x.iter()
        .zip(x_hat)
        .map(|(a, b)| {
            if b > a {
                1.0 / n
            } else if b < a {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
}

/// `(gan_d, gan_g)`: discriminator logistic loss and the non-saturating
/// generator loss.
pub fn loss_gan(real: &[f64], fake: &[f64]) -> Result<(f64, f64)> {
    if real.is_empty() || fake.is_empty() {
        return data_err("empty score list");
    }
    let nr = real.len() as f64;
    let nf = fake.len() as f64;
    let d = -real.iter().map(|&s| clamp_score(s).ln()).sum::<f64>() / nr
        - fake.iter().map(|&s| (1.0 - clamp_score(s)).ln()).sum::<f64>() / nf;
    let g = -fake.iter().map(|&s| clamp_score(s).ln()).sum::<f64>() / nf;
    Ok((d, g))
}

/// Gradients of `gan_d` with respect to the real and fake scores.
pub fn loss_gan_d_grad(real: &[f64], fake: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nr = real.len() as f64;
    let nf = fake.len() as f64;
    let inside = |s: f64| s > SCORE_EPS && s < 1.0 - SCORE_EPS;
    let gr = real.iter().map(|&s| if inside(s) { -1.0 / (nr * s) } else { 0.0 }).collect();
    let gf = fake.iter().map(|&s| if inside(s) { 1.0 / (nf * (1.0 - s)) } else { 0.0 }).collect();
    (gr, gf)
}

/// Gradient of `gan_g` with respect to the fake scores.
pub fn loss_gan_g_grad(fake: &[f64]) -> Vec<f64> {
    let nf = fake.len() as f64;
    fake.iter()
        .map(|&s| if s > SCORE_EPS && s < 1.0 - SCORE_EPS { -1.0 / (nf * s) } else { 0.0 })
        .collect()
}

/// `proj · z_g` for a row-major `len(z_c) × len(z_g)` projection.
pub fn project(z_g: &[f64], proj: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    gemm(out_len, z_g.len(), 1, proj, false, z_g, false, 0.0, &mut out);
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Hinged triplet surrogate: `max(0, λ1 + d(z_g, ẑ_g) − d(P z_g, z_c))`.
pub fn loss_mutual(z_g: &[f64], z_g_hat: &[f64], z_c: &[f64], proj: &[f64], lambda1: f64) -> Result<f64> {
    same_len(z_g, z_g_hat)?;
    if proj.len() != z_c.len() * z_g.len() {
        return data_err("projection does not match latent sizes");
    }
    let pz = project(z_g, proj, z_c.len());
    Ok((lambda1 + dist(z_g, z_g_hat) - dist(&pz, z_c)).max(0.0))
}

/// Mutual term from precomputed distances.
pub fn mutual_from_distances(d_geom: f64, d_cond: f64, lambda1: f64) -> f64 {
    (lambda1 + d_geom - d_cond).max(0.0)
}

pub struct MutualGrads {
    pub value: f64,
    pub z_g: Vec<f64>,
    pub z_g_hat: Vec<f64>,
    pub z_c: Vec<f64>,
}

pub fn loss_mutual_grad(z_g: &[f64], z_g_hat: &[f64], z_c: &[f64], proj: &[f64], lambda1: f64) -> MutualGrads {
    let pz = project(z_g, proj, z_c.len());
    let d1 = dist(z_g, z_g_hat);
    let d2 = dist(&pz, z_c);
    let value = (lambda1 + d1 - d2).max(0.0);
    let mut g = MutualGrads {
        value,
        z_g: vec![0.0; z_g.len()],
        z_g_hat: vec![0.0; z_g.len()],
        z_c: vec![0.0; z_c.len()],
    };
    if value <= 0.0 {
        return g;
    }
    if d1 > 0.0 {
        for i in 0..z_g.len() {
            let v = (z_g[i] - z_g_hat[i]) / d1;
            g.z_g[i] += v;
            g.z_g_hat[i] -= v;
        }
    }
    if d2 > 0.0 {
        let r: Vec<f64> = pz.iter().zip(z_c).map(|(a, b)| (a - b) / d2).collect();
        // d/dz_c of -d2 is +r; d/dz_g is -Pᵀr
        g.z_c.copy_from_slice(&r);
        let mut pt = vec![0.0; z_g.len()];
        gemm(1, z_c.len(), z_g.len(), &r, false, proj, false, 0.0, &mut pt);
        g.z_g.iter_mut().zip(&pt).for_each(|(a, b)| *a -= b);
    }
    g
}

/// Softmax cross-entropy.
pub fn loss_classifier(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return data_err(format!("label {label} out of range for {} classes", logits.len()));
    }
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok((lse - logits[label]).max(0.0))
}

pub fn loss_classifier_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter()
        .enumerate()
        .map(|(i, v)| v / s - if i == label { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferWeights {
    pub recon: f64,
    pub gan: f64,
    pub mutual: f64,
    pub classifier: f64,
}

impl Default for TransferWeights {
    fn default() -> Self {
        TransferWeights {
            recon: 1.0,
            gan: 1.0,
            mutual: 1.0,
            classifier: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransferLossReport {
    pub recon: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub mutual: f64,
    pub classifier: f64,
    pub total: f64,
}

/// Weighted generator objective; `gan_d` is reported but not part of the total.
pub fn loss_transfer(recon: f64, gan_g: f64, gan_d: f64, mutual: f64, classifier: f64, w: &TransferWeights) -> TransferLossReport {
    TransferLossReport {
        recon,
        gan_g,
        gan_d,
        mutual,
        classifier,
        total: w.recon * recon + w.gan * gan_g + w.mutual * mutual + w.classifier * classifier,
    }
}
