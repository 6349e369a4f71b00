//! Sampled signals and their spectral coefficients.

use num_complex::Complex64;

use crate::error::{HarmonicsError, Result};
use crate::grid;
use crate::wigner::wigner_count;

fn check_bandwidth(b: usize) -> Result<()> {
    if b == 0 {
        return Err(HarmonicsError::InvalidBandwidth(b));
    }
    Ok(())
}

/// Real signal on the `2B×2B` equiangular sphere grid, `K` channels.
///
/// Layout is `[channel][θ row][φ column]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalSignal {
    bandwidth: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SphericalSignal {
    pub fn zeros(bandwidth: usize, channels: usize) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            bandwidth,
            channels,
            data: vec![0.0; channels * 4 * bandwidth * bandwidth],
        })
    }

    pub fn from_grid(bandwidth: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let per = 4 * bandwidth * bandwidth;
        if channels == 0 || data.len() != channels * per {
            return Err(HarmonicsError::GridShape {
                bandwidth,
                expected: per,
                got: if channels == 0 { data.len() } else { data.len() / channels },
            });
        }
        Ok(Self {
            bandwidth,
            channels,
            data,
        })
    }

    /// Interprets an `rows×cols` image (one channel) as grid samples.
    pub fn from_image(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows != cols || rows % 2 != 0 || data.len() != rows * cols {
            return Err(HarmonicsError::GridShape {
                bandwidth: rows / 2,
                expected: rows * rows,
                got: data.len(),
            });
        }
        Self::from_grid(rows / 2, 1, data)
    }

    /// Samples `f(θ, φ)` on the grid of a single-channel signal.
    pub fn from_fn(bandwidth: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let n = 2 * bandwidth;
        let mut data = Vec::with_capacity(n * n);
        for j in 0..n {
            for k in 0..n {
                data.push(f(grid::theta(bandwidth, j), grid::phi(bandwidth, k)));
            }
        }
        Self::from_grid(bandwidth, 1, data)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Samples per side (`2B`).
    pub fn side(&self) -> usize {
        2 * self.bandwidth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let per = 4 * self.bandwidth * self.bandwidth;
        &self.data[c * per..(c + 1) * per]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let per = 4 * self.bandwidth * self.bandwidth;
        &mut self.data[c * per..(c + 1) * per]
    }

    pub fn get(&self, c: usize, j: usize, k: usize) -> f64 {
        let n = self.side();
        self.data[(c * n + j) * n + k]
    }

    /// Quadrature-weighted squared norm `Σ_c ∫ f² dΩ`.
    pub fn weighted_norm_sq(&self) -> f64 {
        let n = self.side();
        let w = grid::polar_weights(self.bandwidth);
        let q = grid::azimuth_step(self.bandwidth);
        let mut acc = 0.0;
        for c in 0..self.channels {
            let ch = self.channel(c);
            for j in 0..n {
                acc += q * w[j] * ch[j * n..(j + 1) * n].iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc
    }
}

/// Spherical harmonic coefficients `c[l][m]`, `l < B`, `|m| ≤ l`.
///
/// Per channel the packed index of `(l, m)` is `l² + l + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoeffs {
    bandwidth: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl HarmonicCoeffs {
    pub fn zeros(bandwidth: usize, channels: usize) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            bandwidth,
            channels,
            data: vec![Complex64::new(0.0, 0.0); channels * bandwidth * bandwidth],
        })
    }

    pub fn from_data(bandwidth: usize, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if channels == 0 || data.len() != channels * bandwidth * bandwidth {
            return Err(HarmonicsError::Layout(format!(
                "{} coefficients for {channels} channels at bandwidth {bandwidth}",
                data.len()
            )));
        }
        Ok(Self {
            bandwidth,
            channels,
            data,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let per = self.bandwidth * self.bandwidth;
        &self.data[c * per..(c + 1) * per]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let per = self.bandwidth * self.bandwidth;
        &mut self.data[c * per..(c + 1) * per]
    }

    pub fn get(&self, c: usize, l: usize, m: i64) -> Complex64 {
        self.channel(c)[harmonic_index(l, m)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: i64, v: Complex64) {
        self.channel_mut(c)[harmonic_index(l, m)] = v;
    }

    /// `Σ |c|²` over all channels.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest violation of the real-signal symmetry `c[l][-m] = (-1)^m conj(c[l][m])`.
    pub fn real_symmetry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.channels {
            for l in 0..self.bandwidth {
                for m in 1..=l as i64 {
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let want = self.get(c, l, m).conj() * sign;
                    worst = worst.max((self.get(c, l, -m) - want).norm());
                }
                worst = worst.max(self.get(c, l, 0).im.abs());
            }
        }
        worst
    }
}

/// Packed index of `(l, m)` in a harmonic coefficient block.
#[inline]
pub fn harmonic_index(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Wigner coefficients `d[l][m][n]`, `l < B`, `|m|, |n| ≤ l`.
///
/// Packed per channel with [`crate::wigner::wigner_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct WignerCoeffs {
    bandwidth: usize,
    channels: usize,
    data: Vec<Complex64>,
}

impl WignerCoeffs {
    pub fn zeros(bandwidth: usize, channels: usize) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            bandwidth,
            channels,
            data: vec![Complex64::new(0.0, 0.0); channels * wigner_count(bandwidth)],
        })
    }

    pub fn from_data(bandwidth: usize, channels: usize, data: Vec<Complex64>) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if channels == 0 || data.len() != channels * wigner_count(bandwidth) {
            return Err(HarmonicsError::Layout(format!(
                "{} coefficients for {channels} channels at bandwidth {bandwidth}",
                data.len()
            )));
        }
        Ok(Self {
            bandwidth,
            channels,
            data,
        })
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let per = wigner_count(self.bandwidth);
        &self.data[c * per..(c + 1) * per]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [Complex64] {
        let per = wigner_count(self.bandwidth);
        &mut self.data[c * per..(c + 1) * per]
    }

    pub fn get(&self, c: usize, l: usize, m: i64, n: i64) -> Complex64 {
        self.channel(c)[crate::wigner::wigner_index(l, m, n)]
    }

    pub fn set(&mut self, c: usize, l: usize, m: i64, n: i64, v: Complex64) {
        self.channel_mut(c)[crate::wigner::wigner_index(l, m, n)] = v;
    }
}

/// Real signal on the `2B×2B×2B` ZYZ Euler grid.
///
/// Layout is `[channel][β][α][γ]`, so a fixed `(β, α)` pair addresses a
/// contiguous run over `γ`, and `(β, α)` index the sphere point `R·ẑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SO3Signal {
    bandwidth: usize,
    channels: usize,
    data: Vec<f64>,
}

impl SO3Signal {
    pub fn zeros(bandwidth: usize, channels: usize) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            bandwidth,
            channels,
            data: vec![0.0; channels * 8 * bandwidth.pow(3)],
        })
    }

    pub fn from_grid(bandwidth: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let per = 8 * bandwidth.pow(3);
        if channels == 0 || data.len() != channels * per {
            return Err(HarmonicsError::GridShape {
                bandwidth,
                expected: per,
                got: if channels == 0 { data.len() } else { data.len() / channels },
            });
        }
        Ok(Self {
            bandwidth,
            channels,
            data,
        })
    }

    /// Samples `f(α, β, γ)` on the grid of a single-channel signal.
    pub fn from_fn(bandwidth: usize, f: impl Fn(f64, f64, f64) -> f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let n = 2 * bandwidth;
        let mut data = Vec::with_capacity(n * n * n);
        for j in 0..n {
            for k in 0..n {
                for g in 0..n {
                    data.push(f(grid::phi(bandwidth, k), grid::theta(bandwidth, j), grid::phi(bandwidth, g)));
                }
            }
        }
        Self::from_grid(bandwidth, 1, data)
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn side(&self) -> usize {
        2 * self.bandwidth
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let per = 8 * self.bandwidth.pow(3);
        &self.data[c * per..(c + 1) * per]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let per = 8 * self.bandwidth.pow(3);
        &mut self.data[c * per..(c + 1) * per]
    }

    /// Sample at `(β_j, α_k, γ_g)`.
    pub fn get(&self, c: usize, j: usize, k: usize, g: usize) -> f64 {
        let n = self.side();
        self.data[((c * n + j) * n + k) * n + g]
    }

    /// Left translation by a rotation about z through `steps` grid cells:
    /// `out(α, β, γ) = in(α - steps·2π/2B, β, γ)`.
    pub fn shift_alpha(&self, steps: i64) -> SO3Signal {
        let n = self.side();
        let mut out = self.clone();
        for c in 0..self.channels {
            for j in 0..n {
                for k in 0..n {
                    let src = (k as i64 - steps).rem_euclid(n as i64) as usize;
                    for g in 0..n {
                        out.data[((c * n + j) * n + k) * n + g] = self.data[((c * n + j) * n + src) * n + g];
                    }
                }
            }
        }
        out
    }
}
