//! The cross-domain generator pair with its discriminator and classifier.

use crate::checkpoint::Checkpoint;
use crate::error::{data_err, Result};
use crate::geometry::{EquirectImage, Panorama, RangeImage};
use crate::nn::*;

use super::net::*;

/// Total stride of the encoders; shift canonicalization works modulo this.
pub const ENCODER_STRIDE: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    pub height: usize,
    pub width: usize,
    pub n_conditions: usize,
    pub widths: [usize; 4],
    pub zc_dim: usize,
    pub seed: u64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            height: 64,
            width: 64,
            n_conditions: 4,
            widths: [8, 16, 32, 64],
            zc_dim: 32,
            seed: 0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height % 16 != 0 || self.width % 16 != 0 || self.height == 0 || self.width == 0 {
            return data_err("image sides must be positive multiples of 16");
        }
        if self.n_conditions == 0 || self.zc_dim == 0 || self.widths.contains(&0) {
            return data_err("layer sizes and condition count must be positive");
        }
        Ok(())
    }

    /// `(channels, rows, cols)` of the geometry latent.
    pub fn latent_dims(&self) -> (usize, usize, usize) {
        (self.widths[3], self.height / 8, self.width / 8)
    }

    pub fn latent_len(&self) -> usize {
        let (c, h, w) = self.latent_dims();
        c * h * w
    }
}

/// Split latent: spatial geometry map `z_g` (`C×h×w`, channel-major) and the
/// global condition vector `z_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub z_g: Vec<f64>,
    pub z_c: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Outputs of one pass. Latents live in the canonical azimuth frame selected
/// by `phase`; images are returned in the input frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferForwardResult {
    pub z: LatentCode,
    pub y_hat: RangeImage,
    pub z_g_hat: Vec<f64>,
    pub x_hat: EquirectImage,
    pub cond_logits: Vec<f64>,
    pub phase: usize,
}

/// Everything backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct TransferTape {
    phase: usize,
    enc: EncoderTape,
    zc_in: Vec<f64>,
    renc: EncoderTape,
    rdec: DecoderTape,
    idec: DecoderTape,
    cls_hidden: Vec<f64>,
    z_c: Vec<f64>,
}

/// Loss gradients with respect to forward outputs; empty vectors mean zero.
/// Image gradients are in the input frame, latent gradients in the canonical frame.
#[derive(Clone, Debug, Default)]
pub struct TransferGrads {
    pub y_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub z_g: Vec<f64>,
    pub z_g_hat: Vec<f64>,
    pub z_c: Vec<f64>,
    pub cond_logits: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TransferParams {
    pub config: TransferConfig,
    pub image_encoder: ConvEncoder,
    pub zc_head: Linear,
    pub range_decoder: ConvDecoder,
    pub range_encoder: ConvEncoder,
    pub image_decoder: ConvDecoder,
    pub discriminator: Discriminator,
    pub classifier: Classifier,
    /// Frozen projection of flattened `z_g` onto the `z_c` length.
    pub projection: Param,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    if !src.is_empty() {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    }
}

/// Per-channel mean and standard deviation of a planar image.
fn channel_stats(planar: &[f64], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = planar.len() / channels;
    let mut mean = Vec::with_capacity(channels);
    let mut std = Vec::with_capacity(channels);
    for ch in planar.chunks_exact(n) {
        let m = ch.iter().sum::<f64>() / n as f64;
        let v = ch.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        mean.push(m);
        std.push((v + 1e-4).sqrt());
    }
    (mean, std)
}

impl TransferParams {
    pub fn new(config: TransferConfig) -> Result<Self> {
        config.validate()?;
        let w = config.widths;
        let dec = [w[2], w[1], w[0]];
        let mut rng = rng_for(config.seed, 1);
        let image_encoder = ConvEncoder::new("img_enc", 3, w, &mut rng);
        let zc_head = Linear::new("zc_head", w[3] + 6, config.zc_dim, 1.0, &mut rng);
        let range_decoder = ConvDecoder::new("rng_dec", w[3], dec, 1, &mut rng);
        let range_encoder = ConvEncoder::new("rng_enc", 1, w, &mut rng);
        let image_decoder = ConvDecoder::new("img_dec", w[3] + config.zc_dim, dec, 3, &mut rng);
        let mut drng = rng_for(config.seed, 2);
        let discriminator = Discriminator::new(config.height, [8, 16, 32, 32], &mut drng);
        let classifier = Classifier::new(config.zc_dim, config.n_conditions, &mut drng);
        let len = config.latent_len();
        let mut prng = rng_for(config.seed, 3);
        let projection = Param::normal("mutual.proj", &[config.zc_dim, len], 1.0 / (len as f64).sqrt(), &mut prng);
        Ok(TransferParams {
            config,
            image_encoder,
            zc_head,
            range_decoder,
            range_encoder,
            image_decoder,
            discriminator,
            classifier,
            projection,
        })
    }

    /// Parameters updated by the generator objective.
    pub fn generator_params_mut(&mut self) -> Vec<&mut Param> {
        self.split_params_mut().0
    }

    /// `(generator, discriminator, projection)` borrowed together.
    fn split_params_mut(&mut self) -> (Vec<&mut Param>, Vec<&mut Param>, &mut Param) {
        let mut v = self.image_encoder.params_mut();
        v.extend(self.zc_head.params_mut());
        v.extend(self.range_decoder.params_mut());
        v.extend(self.range_encoder.params_mut());
        v.extend(self.image_decoder.params_mut());
        v.extend(self.classifier.params_mut());
        (v, self.discriminator.params_mut(), &mut self.projection)
    }

    pub fn generator_params(&self) -> Vec<&Param> {
        let mut v = self.image_encoder.params();
        v.extend(self.zc_head.params());
        v.extend(self.range_decoder.params());
        v.extend(self.range_encoder.params());
        v.extend(self.image_decoder.params());
        v.extend(self.classifier.params());
        v
    }

    pub fn discriminator_params_mut(&mut self) -> Vec<&mut Param> {
        self.discriminator.params_mut()
    }

    /// All arrays including the frozen projection.
    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.generator_params();
        v.extend(self.discriminator.params());
        v.push(&self.projection);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let (mut v, d, p) = self.split_params_mut();
        v.extend(d);
        v.push(p);
        v
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    pub fn checksum(&self) -> u64 {
        Checkpoint::checksum(&self.params())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("transfer");
        let c = &self.config;
        for (k, v) in [
            ("height", c.height),
            ("width", c.width),
            ("n_conditions", c.n_conditions),
            ("w0", c.widths[0]),
            ("w1", c.widths[1]),
            ("w2", c.widths[2]),
            ("w3", c.widths[3]),
            ("zc_dim", c.zc_dim),
        ] {
            ck.meta.insert(k.to_string(), v.to_string());
        }
        ck.meta.insert("seed".to_string(), c.seed.to_string());
        for p in self.params() {
            ck.push(p);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("transfer")?;
        let config = TransferConfig {
            height: ck.meta_usize("height")?,
            width: ck.meta_usize("width")?,
            n_conditions: ck.meta_usize("n_conditions")?,
            widths: [ck.meta_usize("w0")?, ck.meta_usize("w1")?, ck.meta_usize("w2")?, ck.meta_usize("w3")?],
            zc_dim: ck.meta_usize("zc_dim")?,
            seed: ck.meta_usize("seed")? as u64,
        };
        let mut params = TransferParams::new(config)?;
        ck.restore(params.params_mut())?;
        Ok(params)
    }

    pub fn write<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.to_checkpoint().write(w)
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(r)?)
    }

    fn check_image(&self, x: &EquirectImage) -> Result<()> {
        if x.height() != self.config.height || x.width() != self.config.width {
            return data_err(format!(
                "expected a {}×{} image, got {}×{}",
                self.config.height,
                self.config.width,
                x.height(),
                x.width()
            ));
        }
        Ok(())
    }

    /// Range prediction from a geometry latent (canonical frame). Depends on
    /// nothing but `z_g`.
    pub fn decode_range(&self, z_g: &[f64]) -> Result<RangeImage> {
        let (c, h, w) = self.config.latent_dims();
        if z_g.len() != c * h * w {
            return data_err("geometry latent has the wrong size");
        }
        let (y, _) = self.range_decoder.forward(z_g, h, w);
        RangeImage::new(self.config.height, self.config.width, y)
    }

    /// Score of a range image in `(0,1)`.
    pub fn discriminate(&self, y: &RangeImage) -> Result<f64> {
        if y.height() != self.config.height || y.width() != self.config.width {
            return data_err("range image has the wrong size");
        }
        Ok(self.discriminator.forward(y.values(), y.height(), y.width()).0)
    }

    pub fn forward_tape(&self, x: &EquirectImage) -> Result<(TransferForwardResult, TransferTape)> {
        self.check_image(x)?;
        let cfg = &self.config;
        let (hh, ww) = (cfg.height, cfg.width);
        let (lc, lh, lw) = cfg.latent_dims();
        let planar = x.to_planar();
        let phase = canonical_phase(&planar, hh, ww, ENCODER_STRIDE);
        let canon = roll_width(&planar, ww, -(phase as i64));
        let (mean, std) = channel_stats(&canon, 3);
        let n = hh * ww;
        let standardized: Vec<f64> = canon.iter().enumerate().map(|(i, v)| (v - mean[i / n]) / std[i / n]).collect();

        let (z_g, enc) = self.image_encoder.forward(&standardized, hh, ww);
        let cells = (lh * lw) as f64;
        let mut zc_in: Vec<f64> = z_g.chunks_exact(lh * lw).map(|c| c.iter().sum::<f64>() / cells).collect();
        zc_in.extend(&mean);
        zc_in.extend(&std);
        let z_c = self.zc_head.forward(&zc_in);

        let (y_canon, rdec) = self.range_decoder.forward(&z_g, lh, lw);
        let y_in: Vec<f64> = y_canon.iter().map(|v| 2.0 * v - 1.0).collect();
        let (z_g_hat, renc) = self.range_encoder.forward(&y_in, hh, ww);

        let mut dec_in = z_g_hat.clone();
        for &v in &z_c {
            dec_in.extend(std::iter::repeat_n(v, lh * lw));
        }
        let (x_canon, idec) = self.image_decoder.forward(&dec_in, lh, lw);
        let (cond_logits, cls_hidden) = self.classifier.forward(&z_c);
        debug_assert_eq!(z_g.len(), lc * lh * lw);

        let y_hat = RangeImage::new(hh, ww, roll_width(&y_canon, ww, phase as i64))?;
        let x_hat = EquirectImage::from_planar(hh, ww, &roll_width(&x_canon, ww, phase as i64))?;
        let result = TransferForwardResult {
            z: LatentCode {
                z_g,
                z_c: z_c.clone(),
            },
            y_hat,
            z_g_hat,
            x_hat,
            cond_logits,
            phase,
        };
        let tape = TransferTape {
            phase,
            enc,
            zc_in,
            renc,
            rdec,
            idec,
            cls_hidden,
            z_c,
        };
        Ok((result, tape))
    }

    /// Accumulates generator gradients for the given output gradients.
    pub fn backward(&mut self, tape: &TransferTape, grads: &TransferGrads) {
        let cfg = self.config.clone();
        let (lc, lh, lw) = cfg.latent_dims();
        let cells = lh * lw;
        let (hh, ww) = (cfg.height, cfg.width);
        let back = -(tape.phase as i64);

        let mut g_zc = vec![0.0; cfg.zc_dim];
        add_into(&mut g_zc, &grads.z_c);
        if !grads.cond_logits.is_empty() {
            let g = self.classifier.backward(&tape.z_c, &tape.cls_hidden, &grads.cond_logits);
            add_into(&mut g_zc, &g);
        }

        let mut g_zghat = vec![0.0; lc * cells];
        add_into(&mut g_zghat, &grads.z_g_hat);
        if !grads.x_hat.is_empty() {
            let g_x = roll_width(&grads.x_hat, ww, back);
            let g_in = self.image_decoder.backward(&tape.idec, &g_x);
            add_into(&mut g_zghat, &g_in[..lc * cells]);
            for (k, chunk) in g_in[lc * cells..].chunks_exact(cells).enumerate() {
                g_zc[k] += chunk.iter().sum::<f64>();
            }
        }

        let mut g_zg = vec![0.0; lc * cells];
        add_into(&mut g_zg, &grads.z_g);
        if g_zc.iter().any(|&v| v != 0.0) {
            let g_in = self.zc_head.backward(&tape.zc_in, &g_zc);
            for (c, &gv) in g_in[..lc].iter().enumerate() {
                g_zg[c * cells..(c + 1) * cells].iter_mut().for_each(|v| *v += gv / cells as f64);
            }
        }

        let mut g_y = vec![0.0; hh * ww];
        if g_zghat.iter().any(|&v| v != 0.0) {
            let g_in = self.range_encoder.backward(&tape.renc, &g_zghat, true).expect("input gradient");
            g_y.iter_mut().zip(&g_in).for_each(|(d, s)| *d += 2.0 * s);
        }
        if !grads.y_hat.is_empty() {
            add_into(&mut g_y, &roll_width(&grads.y_hat, ww, back));
        }
        if g_y.iter().any(|&v| v != 0.0) {
            let g = self.range_decoder.backward(&tape.rdec, &g_y);
            add_into(&mut g_zg, &g);
        }
        if g_zg.iter().any(|&v| v != 0.0) {
            self.image_encoder.backward(&tape.enc, &g_zg, false);
        }
    }
}

/// Evaluates the transfer network on `x`.
pub fn transfer_forward(x: &EquirectImage, params: &TransferParams, mode: Mode) -> Result<TransferForwardResult> {
    // no stochastic layers: both modes run the same computation
    let _ = mode;
    Ok(params.forward_tape(x)?.0)
}

/// Score of `y` under the discriminator.
pub fn discriminate(y: &RangeImage, params: &TransferParams) -> Result<f64> {
    params.discriminate(y)
}
