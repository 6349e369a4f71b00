//! Place descriptor network: backbone, pointwise map to local features,
//! VLAD, projection and L2 normalization.

use crate::checkpoint::Checkpoint;
use crate::error::{data_err, Result};
use crate::geometry::{Panorama, RangeImage};
use crate::nn::{canonical_phase, gemm, roll_width, Linear, Param};
use crate::transfer::net::rng_for;

use super::backbone::{Backbone, BackboneConfig, BackboneTape};
use super::vlad::{residuals, soft_assign, LocalFeatureField, VladCodebook};

/// Descriptors whose pre-normalization norm is below this become zero.
pub const MIN_NORM: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorConfig {
    pub backbone: BackboneConfig,
    pub local_dim: usize,
    pub clusters: usize,
    pub out_dim: usize,
    pub seed: u64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            backbone: BackboneConfig::default(),
            local_dim: 32,
            clusters: 16,
            out_dim: 256,
            seed: 0,
        }
    }
}

/// Unit-norm global descriptor (or all zeros for degenerate inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct PlaceDescriptor {
    pub values: Vec<f64>,
}

impl PlaceDescriptor {
    pub fn distance(&self, other: &PlaceDescriptor) -> f64 {
        super::loss::distance(&self.values, &other.values)
    }
}

/// Pooled backbone output `[C3][cells]`; the input of the trainable head.
#[derive(Clone, Debug, PartialEq)]
pub struct BackboneField {
    pub channels: usize,
    pub cells: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct HeadTape {
    pooled: Vec<f64>,
    field: LocalFeatureField,
    assign: Vec<f64>,
    vlad: Vec<f64>,
    norm: f64,
    desc: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DescriptorParams {
    pub config: DescriptorConfig,
    pub backbone: Backbone,
    pub local_w: Param,
    pub local_b: Param,
    pub codebook: VladCodebook,
    pub projection: Linear,
}

impl DescriptorParams {
    pub fn new(config: DescriptorConfig) -> Result<Self> {
        if config.local_dim == 0 || config.clusters == 0 || config.out_dim == 0 {
            return data_err("descriptor sizes must be positive");
        }
        let mut rng = rng_for(config.seed, 11);
        let backbone = Backbone::new(config.backbone.clone(), &mut rng)?;
        let c3 = config.backbone.channels[2];
        let local_w = Param::normal("local.w", &[config.local_dim, c3], 1.0 / (c3 as f64).sqrt(), &mut rng);
        let local_b = Param::zeros("local.b", &[config.local_dim]);
        let codebook = VladCodebook::new(config.clusters, config.local_dim, &mut rng);
        let projection = Linear::new("desc.proj", config.clusters * config.local_dim, config.out_dim, 1.0, &mut rng);
        Ok(DescriptorParams {
            config,
            backbone,
            local_w,
            local_b,
            codebook,
            projection,
        })
    }

    pub fn head_params(&self) -> Vec<&Param> {
        let mut v = vec![&self.local_w, &self.local_b];
        v.extend(self.codebook.params());
        v.extend(self.projection.params());
        v
    }

    pub fn head_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.local_w, &mut self.local_b];
        v.extend(self.codebook.params_mut());
        v.extend(self.projection.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = self.backbone.params();
        v.extend(self.head_params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.backbone.params_mut();
        v.extend([&mut self.local_w, &mut self.local_b]);
        v.extend(self.codebook.params_mut());
        v.extend(self.projection.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.backbone.zero_grad();
        self.head_params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Moves staged backbone gradients into the parameter gradients.
    pub fn flush_grads(&mut self) {
        self.backbone.flush_grads();
    }

    pub fn checksum(&self) -> u64 {
        Checkpoint::checksum(&self.params())
    }

    pub fn input_side(&self) -> usize {
        2 * self.config.backbone.input_b
    }

    fn check_input(&self, y: &RangeImage) -> Result<()> {
        let s = self.input_side();
        if y.height() != s || y.width() != s {
            return data_err(format!("descriptor expects a {s}×{s} range image, got {}×{}", y.height(), y.width()));
        }
        Ok(())
    }

    /// Input rolled to its canonical column parity. The backbone maps a
    /// two-column input shift to a one-cell field shift, so fixing the parity
    /// makes the descriptor exactly invariant to every column shift.
    pub fn canonical_input(&self, y: &RangeImage) -> Result<Vec<f64>> {
        self.check_input(y)?;
        let w = y.width();
        let p = canonical_phase(y.values(), y.height(), w, 2);
        Ok(roll_width(y.values(), w, -(p as i64)))
    }

    pub fn backbone_field(&self, input: &[f64]) -> Result<(BackboneField, BackboneTape)> {
        let (data, tape) = self.backbone.forward(input)?;
        let channels = self.config.backbone.channels[2];
        let cells = data.len() / channels;
        Ok((BackboneField { channels, cells, data }, tape))
    }

    /// Pointwise linear map from pooled channels to local features.
    pub fn local_features(&self, field: &BackboneField) -> LocalFeatureField {
        let d = self.config.local_dim;
        let n = field.cells;
        let mut x = vec![0.0; n * d];
        for row in x.chunks_exact_mut(d) {
            row.copy_from_slice(&self.local_b.value);
        }
        gemm(n, field.channels, d, &field.data, true, &self.local_w.value, true, 1.0, &mut x);
        let side = (n as f64).sqrt().round() as usize;
        LocalFeatureField {
            rows: side,
            cols: n / side,
            dim: d,
            data: x,
        }
    }

    /// Descriptor from a backbone field, with the values needed for backward.
    pub fn head_forward(&self, field: &BackboneField) -> Result<(PlaceDescriptor, HeadTape)> {
        if field.channels != self.config.backbone.channels[2] {
            return data_err("backbone field has the wrong channel count");
        }
        let local = self.local_features(field);
        let assign = soft_assign(&local, &self.codebook);
        let vlad = residuals(&local, &self.codebook, &assign);
        let u = self.projection.forward(&vlad);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let desc: Vec<f64> = if norm < MIN_NORM {
            vec![0.0; u.len()]
        } else {
            u.iter().map(|v| v / norm).collect()
        };
        let tape = HeadTape {
            pooled: field.data.clone(),
            field: local,
            assign,
            vlad,
            norm,
            desc: desc.clone(),
        };
        Ok((PlaceDescriptor { values: desc }, tape))
    }

    /// Accumulates head gradients; returns the gradient for the backbone field.
    pub fn head_backward(&mut self, tape: &HeadTape, g_desc: &[f64]) -> Vec<f64> {
        let (n, d, k) = (tape.field.cells(), tape.field.dim, self.codebook.clusters());
        let c3 = self.config.backbone.channels[2];
        if tape.norm < MIN_NORM {
            return vec![0.0; c3 * n];
        }
        let dot: f64 = tape.desc.iter().zip(g_desc).map(|(a, b)| a * b).sum();
        let g_u: Vec<f64> = tape.desc.iter().zip(g_desc).map(|(y, g)| (g - y * dot) / tape.norm).collect();
        let g_v = self.projection.backward(&tape.vlad, &g_u);

        let s = &tape.assign;
        let x = &tape.field.data;
        let centers = self.codebook.centers.value.clone();
        let mut g_x = vec![0.0; n * d];
        gemm(n, k, d, s, false, &g_v, false, 0.0, &mut g_x);
        let mut g_s = vec![0.0; n * k];
        gemm(n, d, k, x, false, &g_v, true, 0.0, &mut g_s);
        for c in 0..k {
            let mass: f64 = (0..n).map(|i| s[i * k + c]).sum();
            let mut gc_dot = 0.0;
            for j in 0..d {
                gc_dot += g_v[c * d + j] * centers[c * d + j];
                self.codebook.centers.grad[c * d + j] -= mass * g_v[c * d + j];
            }
            for i in 0..n {
                g_s[i * k + c] -= gc_dot;
            }
        }
        let mut g_l = vec![0.0; n * k];
        for i in 0..n {
            let row = &s[i * k..(i + 1) * k];
            let gs = &g_s[i * k..(i + 1) * k];
            let mean: f64 = row.iter().zip(gs).map(|(a, b)| a * b).sum();
            for c in 0..k {
                g_l[i * k + c] = row[c] * (gs[c] - mean);
            }
        }
        gemm(k, n, d, &g_l, true, x, false, 1.0, &mut self.codebook.assign_w.grad);
        for i in 0..n {
            for c in 0..k {
                self.codebook.assign_b.grad[c] += g_l[i * k + c];
            }
        }
        gemm(n, k, d, &g_l, false, &self.codebook.assign_w.value, false, 1.0, &mut g_x);

        gemm(d, n, c3, &g_x, true, &tape.pooled, true, 1.0, &mut self.local_w.grad);
        for i in 0..n {
            for j in 0..d {
                self.local_b.grad[j] += g_x[i * d + j];
            }
        }
        let mut g_pooled = vec![0.0; c3 * n];
        gemm(c3, d, n, &self.local_w.value, true, &g_x, true, 0.0, &mut g_pooled);
        g_pooled
    }

    /// Full forward with tapes for both stages.
    pub fn forward_tape(&self, y: &RangeImage) -> Result<(PlaceDescriptor, HeadTape, BackboneTape)> {
        let input = self.canonical_input(y)?;
        let (field, mut bt) = self.backbone_field(&input)?;
        bt.phase = canonical_phase(y.values(), y.height(), y.width(), 2);
        let (desc, ht) = self.head_forward(&field)?;
        Ok((desc, ht, bt))
    }

    /// Backward through head and backbone; call [`Self::flush_grads`] before
    /// reading backbone weight gradients. Returns the gradient with respect
    /// to the input image, undoing the canonical roll.
    pub fn backward(&mut self, head: &HeadTape, backbone: &BackboneTape, g_desc: &[f64]) -> Vec<f64> {
        let g = self.head_backward(head, g_desc);
        let side = self.input_side();
        let g_in = self.backbone.backward(backbone, &g);
        roll_width(&g_in, side, backbone.phase as i64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("descriptor");
        let c = &self.config;
        for (k, v) in [
            ("input_b", c.backbone.input_b),
            ("internal_b", c.backbone.internal_b),
            ("c1", c.backbone.channels[0]),
            ("c2", c.backbone.channels[1]),
            ("c3", c.backbone.channels[2]),
            ("local_dim", c.local_dim),
            ("clusters", c.clusters),
            ("out_dim", c.out_dim),
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
        ck.expect_kind("descriptor")?;
        let config = DescriptorConfig {
            backbone: BackboneConfig {
                input_b: ck.meta_usize("input_b")?,
                internal_b: ck.meta_usize("internal_b")?,
                channels: [ck.meta_usize("c1")?, ck.meta_usize("c2")?, ck.meta_usize("c3")?],
            },
            local_dim: ck.meta_usize("local_dim")?,
            clusters: ck.meta_usize("clusters")?,
            out_dim: ck.meta_usize("out_dim")?,
            seed: ck.meta_usize("seed")? as u64,
        };
        let mut params = DescriptorParams::new(config)?;
        ck.restore(params.params_mut())?;
        Ok(params)
    }

    pub fn write<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.to_checkpoint().write(w)
    }

    pub fn read<R: std::io::Read>(r: R) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::read(r)?)
    }
}

/// Local feature field of `input` (no canonicalization).
pub fn spherical_backbone(input: &RangeImage, params: &DescriptorParams) -> Result<LocalFeatureField> {
    params.check_input(input)?;
    let (field, _) = params.backbone_field(input.values())?;
    Ok(params.local_features(&field))
}

/// Global place descriptor of a range-like image.
pub fn describe(input: &RangeImage, params: &DescriptorParams) -> Result<PlaceDescriptor> {
    Ok(params.forward_tape(input)?.0)
}
