//! Equirectangular rasters: RGB panoramas and normalized range projections.
//!
//! Row `r` covers polar angle `[rπ/H, (r+1)π/H)` from +z and column `c`
//! covers azimuth `[c·2π/W, (c+1)·2π/W)` from +x toward +y.

use crate::error::{data_err, Result};

/// Common raster access used by the yaw operators.
pub trait Panorama: Sized + Clone {
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn channels(&self) -> usize;
    fn data(&self) -> &[f64];
    fn with_data(&self, data: Vec<f64>) -> Self;
}

fn check_values(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => data_err(format!("value {} at index {i} outside [0,1]", data[i])),
        None => Ok(()),
    }
}

/// `H×W×3` panorama with values in `[0,1]`, interleaved row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EquirectImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl EquirectImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width * 3 {
            return data_err(format!("{}×{}×3 image needs {} values, got {}", height, width, height * width * 3, data.len()));
        }
        check_values(&data)?;
        Ok(EquirectImage { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        EquirectImage { height, width, data }
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f64; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [f64; 3]) {
        let i = (r * self.width + c) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar `3×H×W` copy.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for ch in 0..3 {
                out[ch * n + i] = px[ch];
            }
        }
        out
    }

    /// Builds an image from planar `3×H×W` values.
    pub fn from_planar(height: usize, width: usize, planar: &[f64]) -> Result<Self> {
        let n = height * width;
        if planar.len() != 3 * n {
            return data_err("planar buffer has the wrong length");
        }
        let data = (0..n).flat_map(|i| [planar[i], planar[n + i], planar[2 * n + i]]).collect();
        Self::new(height, width, data)
    }

    /// Rec. 601 luma as a single-channel raster.
    pub fn to_gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }
}

impl Panorama for EquirectImage {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        3
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn with_data(&self, data: Vec<f64>) -> Self {
        EquirectImage {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// `H×W` normalized range, `min(range, r_max)/r_max`, with 1.0 meaning no return.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl RangeImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return data_err(format!("{}×{} range image needs {} values, got {}", height, width, height * width, data.len()));
        }
        check_values(&data)?;
        Ok(RangeImage { height, width, data })
    }

    /// All pixels set to the no-return sentinel.
    pub fn empty(height: usize, width: usize) -> Self {
        RangeImage {
            height,
            width,
            data: vec![1.0; height * width],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

impl Panorama for RangeImage {
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    fn channels(&self) -> usize {
        1
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
    fn with_data(&self, data: Vec<f64>) -> Self {
        RangeImage {
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Circular column shift of an interleaved `h×w×ch` raster: `out[c] = in[c - k]`.
pub fn roll_columns(data: &[f64], h: usize, w: usize, ch: usize, k: i64) -> Vec<f64> {
    let k = k.rem_euclid(w as i64) as usize;
    let mut out = vec![0.0; data.len()];
    for r in 0..h {
        let row = &data[r * w * ch..(r + 1) * w * ch];
        let dst = &mut out[r * w * ch..(r + 1) * w * ch];
        let split = (w - k) * ch;
        dst[k * ch..].copy_from_slice(&row[..split]);
        dst[..k * ch].copy_from_slice(&row[split..]);
    }
    out
}

/// Rotates a panorama about the vertical axis by `angle` degrees, so content
/// at azimuth `φ` moves to `φ + angle`.
///
/// Grid-aligned angles are exact column permutations; other angles resample
/// columns linearly with wraparound.
pub fn yaw_shift_equirect<T: Panorama>(img: &T, angle: f64) -> T {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let shift = angle.rem_euclid(360.0) * w as f64 / 360.0;
    let nearest = shift.round();
    if (shift - nearest).abs() < 1e-9 {
        return img.with_data(roll_columns(img.data(), h, w, ch, nearest as i64));
    }
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for c in 0..w {
        let pos = c as f64 - shift;
        let i0 = pos.floor();
        let frac = pos - i0;
        let a = (i0 as i64).rem_euclid(w as i64) as usize;
        let b = (a + 1) % w;
        for r in 0..h {
            for k in 0..ch {
                let va = src[(r * w + a) * ch + k];
                let vb = src[(r * w + b) * ch + k];
                out[(r * w + c) * ch + k] = ((1.0 - frac) * va + frac * vb).clamp(0.0, 1.0);
            }
        }
    }
    img.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> RangeImage {
        let data = (0..64 * 64).map(|i| ((i % 64) as f64) / 64.0).collect();
        RangeImage::new(64, 64, data).unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let img = ramp();
        assert_eq!(yaw_shift_equirect(&img, 0.0), img);
        assert_eq!(yaw_shift_equirect(&img, 360.0), img);
    }

    #[test]
    fn ninety_degrees_is_sixteen_columns() {
        let img = ramp();
        let out = yaw_shift_equirect(&img, 90.0);
        for r in 0..64 {
            for c in 0..64 {
                assert_eq!(out.get(r, c), img.get(r, (c + 64 - 16) % 64));
            }
        }
    }

    #[test]
    fn smooth_round_trip() {
        let data = (0..32 * 64)
            .map(|i| {
                let c = (i % 64) as f64 * std::f64::consts::TAU / 64.0;
                0.5 + 0.3 * c.cos() + 0.1 * (2.0 * c).sin()
            })
            .collect();
        let img = RangeImage::new(32, 64, data).unwrap();
        for a in [45.0, 12.3, 100.7] {
            let back = yaw_shift_equirect(&yaw_shift_equirect(&img, a), -a);
            let err = back.values().iter().zip(img.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            let tol = if a == 45.0 { 0.0 } else { 2e-2 };
            assert!(err <= tol, "angle {a}: {err}");
        }
    }

    #[test]
    fn planar_round_trip() {
        let img = EquirectImage::new(2, 3, (0..18).map(|v| v as f64 / 18.0).collect()).unwrap();
        let back = EquirectImage::from_planar(2, 3, &img.to_planar()).unwrap();
        assert_eq!(back, img);
    }
}
