//! Wigner analysis and synthesis on the `2B×2B×2B` rotation-group grid.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HarmonicsError, Result};
use crate::grid;
use crate::wigner::{d_column, wigner_count, wigner_index};

/// Precomputed tables for transforms between a bandwidth-`grid_b` SO(3)
/// grid and Wigner coefficients of degree below `coeff_b ≤ grid_b`.
pub struct So3Plan {
    grid_b: usize,
    coeff_b: usize,
    weights: Vec<f64>,
    /// Per `(m, n)` pair: offset of its `[β_j][l - l0]` block in `table`.
    pair_off: Vec<usize>,
    table: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for So3Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("So3Plan")
            .field("grid_b", &self.grid_b)
            .field("coeff_b", &self.coeff_b)
            .finish()
    }
}

#[inline]
fn norm(l: usize) -> f64 {
    (2 * l + 1) as f64 / (8.0 * PI * PI)
}

impl So3Plan {
    pub fn new(grid_b: usize, coeff_b: usize) -> Result<Self> {
        if grid_b == 0 {
            return Err(HarmonicsError::InvalidBandwidth(grid_b));
        }
        if coeff_b == 0 || coeff_b > grid_b {
            return Err(HarmonicsError::InvalidBandwidth(coeff_b));
        }
        let n = 2 * grid_b;
        let lb = coeff_b as i64;
        let width = 2 * coeff_b - 1;
        let mut pair_off = vec![0; width * width];
        let mut table = Vec::new();
        let mut col = vec![0.0; coeff_b];
        for m in -(lb - 1)..lb {
            for nn in -(lb - 1)..lb {
                let l0 = m.abs().max(nn.abs()) as usize;
                pair_off[(m + lb - 1) as usize * width + (nn + lb - 1) as usize] = table.len();
                for j in 0..n {
                    d_column(m, nn, coeff_b, grid::theta(grid_b, j), &mut col);
                    table.extend_from_slice(&col[..coeff_b - l0]);
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid_b,
            coeff_b,
            weights: grid::polar_weights(grid_b),
            pair_off,
            table,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn grid_bandwidth(&self) -> usize {
        self.grid_b
    }

    pub fn coeff_bandwidth(&self) -> usize {
        self.coeff_b
    }

    pub fn grid_len(&self) -> usize {
        8 * self.grid_b.pow(3)
    }

    pub fn coeff_len(&self) -> usize {
        wigner_count(self.coeff_b)
    }

    /// In-place 2-D transform of an `n×n` plane with the given 1-D plan.
    fn fft2(&self, plane: &mut [Complex64], fft: &Arc<dyn Fft<f64>>, scratch: &mut [Complex64]) {
        let n = 2 * self.grid_b;
        fft.process(plane);
        for r in 0..n {
            for c in 0..n {
                scratch[c * n + r] = plane[r * n + c];
            }
        }
        fft.process(scratch);
        for r in 0..n {
            for c in 0..n {
                plane[r * n + c] = scratch[c * n + r];
            }
        }
    }

    fn analyze(&self, samples: &[f64], out: &mut [Complex64], weighted: bool) {
        let n = 2 * self.grid_b;
        let lb = self.coeff_b;
        let li = lb as i64;
        let width = 2 * lb - 1;
        assert_eq!(samples.len(), n * n * n);
        assert_eq!(out.len(), wigner_count(lb));
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let q = grid::azimuth_step(self.grid_b);
        let mut plane = vec![Complex64::new(0.0, 0.0); n * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            for (dst, &v) in plane.iter_mut().zip(&samples[j * n * n..(j + 1) * n * n]) {
                *dst = Complex64::new(v, 0.0);
            }
            // Σ_{α,γ} f e^{+imα + inγ}
            self.fft2(&mut plane, &self.inv, &mut scratch);
            let wj = if weighted { q * q * self.weights[j] } else { 1.0 };
            for m in -(li - 1)..li {
                let row = m.rem_euclid(n as i64) as usize * n;
                for nn in -(li - 1)..li {
                    let l0 = m.abs().max(nn.abs()) as usize;
                    let cnt = lb - l0;
                    let off = self.pair_off[(m + li - 1) as usize * width + (nn + li - 1) as usize] + j * cnt;
                    let v = plane[row + nn.rem_euclid(n as i64) as usize] * wj;
                    let d = &self.table[off..off + cnt];
                    for (i, &dv) in d.iter().enumerate() {
                        let l = l0 + i;
                        let s = if weighted { norm(l) * dv } else { dv };
                        out[wigner_index(l, m, nn)] += v * s;
                    }
                }
            }
        }
    }

    fn synthesize(&self, coeffs: &[Complex64], out: &mut [f64], scaled: bool) {
        let n = 2 * self.grid_b;
        let lb = self.coeff_b;
        let li = lb as i64;
        let width = 2 * lb - 1;
        assert_eq!(coeffs.len(), wigner_count(lb));
        assert_eq!(out.len(), n * n * n);
        let q = grid::azimuth_step(self.grid_b);
        let mut plane = vec![Complex64::new(0.0, 0.0); n * n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            plane.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for m in -(li - 1)..li {
                let row = m.rem_euclid(n as i64) as usize * n;
                for nn in -(li - 1)..li {
                    let l0 = m.abs().max(nn.abs()) as usize;
                    let cnt = lb - l0;
                    let off = self.pair_off[(m + li - 1) as usize * width + (nn + li - 1) as usize] + j * cnt;
                    let d = &self.table[off..off + cnt];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (i, &dv) in d.iter().enumerate() {
                        let l = l0 + i;
                        let s = if scaled { norm(l) * dv } else { dv };
                        acc += coeffs[wigner_index(l, m, nn)] * s;
                    }
                    plane[row + nn.rem_euclid(n as i64) as usize] = acc;
                }
            }
            // Σ_{m,n} G e^{-imα - inγ}
            self.fft2(&mut plane, &self.fwd, &mut scratch);
            let s = if scaled { q * q * self.weights[j] } else { 1.0 };
            for (dst, v) in out[j * n * n..(j + 1) * n * n].iter_mut().zip(&plane) {
                *dst = v.re * s;
            }
        }
    }

    /// Grid samples → Wigner coefficients.
    pub fn forward(&self, samples: &[f64], out: &mut [Complex64]) {
        self.analyze(samples, out, true);
    }

    /// Wigner coefficients → grid samples (real part).
    pub fn inverse(&self, coeffs: &[Complex64], out: &mut [f64]) {
        self.synthesize(coeffs, out, false);
    }

    /// Adjoint of [`Self::forward`] under the real inner product.
    pub fn forward_adjoint(&self, grad_coeffs: &[Complex64], out: &mut [f64]) {
        self.synthesize(grad_coeffs, out, true);
    }

    /// Adjoint of [`Self::inverse`] under the real inner product.
    pub fn inverse_adjoint(&self, grad_samples: &[f64], out: &mut [Complex64]) {
        self.analyze(grad_samples, out, false);
    }
}

type PlanCache<T> = Mutex<HashMap<(usize, usize), Arc<T>>>;

/// Shared plan for `(grid_b, coeff_b)`; built once per process.
pub fn so3_plan(grid_b: usize, coeff_b: usize) -> Result<Arc<So3Plan>> {
    static CACHE: OnceLock<PlanCache<So3Plan>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("plan cache poisoned").get(&(grid_b, coeff_b)) {
        return Ok(p.clone());
    }
    let plan = Arc::new(So3Plan::new(grid_b, coeff_b)?);
    cache
        .lock()
        .expect("plan cache poisoned")
        .insert((grid_b, coeff_b), plan.clone());
    Ok(plan)
}
