//! Synthetic appearance conditions: illumination, hue, sensor noise, haze.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::image::{EquirectImage, Panorama};
use crate::error::{data_err, Result};

/// Gray level that haze blends toward.
const FOG_GRAY: f64 = 0.72;

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSpec {
    pub label: usize,
    pub brightness: f64,
    /// Degrees of rotation about the gray axis.
    pub hue_shift: f64,
    pub noise_sigma: f64,
    pub fog_density: f64,
    pub seed: u64,
}

impl ConditionSpec {
    pub fn identity(label: usize) -> Self {
        ConditionSpec {
            label,
            brightness: 1.0,
            hue_shift: 0.0,
            noise_sigma: 0.0,
            fog_density: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.brightness) || !ok(self.noise_sigma) || !ok(self.fog_density) || !self.hue_shift.is_finite() {
            return data_err(format!("invalid condition {}: brightness, sigma and fog must be non-negative", self.label));
        }
        Ok(())
    }
}

fn hue_matrix(degrees: f64) -> [[f64; 3]; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    let k = (1.0 - c) / 3.0;
    let r = s / 3f64.sqrt();
    // Rodrigues rotation about (1,1,1)/√3
    [
        [c + k, k - r, k + r],
        [k + r, c + k, k - r],
        [k - r, k + r, c + k],
    ]
}

/// Applies `cond` to `img`; deterministic in `(img, cond)`, output clipped to `[0,1]`.
pub fn apply_condition(img: &EquirectImage, cond: &ConditionSpec) -> Result<EquirectImage> {
    cond.validate()?;
    let mut data = img.data().to_vec();
    if cond.hue_shift != 0.0 {
        let m = hue_matrix(cond.hue_shift);
        for px in data.chunks_exact_mut(3) {
            let v = [px[0], px[1], px[2]];
            for (o, row) in px.iter_mut().zip(&m) {
                *o = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
            }
        }
    }
    if cond.brightness != 1.0 {
        data.iter_mut().for_each(|v| *v *= cond.brightness);
    }
    if cond.fog_density > 0.0 {
        let keep = (-cond.fog_density).exp();
        data.iter_mut().for_each(|v| *v = *v * keep + FOG_GRAY * (1.0 - keep));
    }
    if cond.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cond.seed);
        let normal = Normal::new(0.0, cond.noise_sigma).map_err(|e| crate::Error::Data(e.to_string()))?;
        data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(img.with_data(data))
}
