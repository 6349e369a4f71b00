//! Spherical harmonic analysis and synthesis on the equiangular grid.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HarmonicsError, Result};
use crate::grid;
use crate::legendre::{lambda_table, tri_index};
use crate::signal::harmonic_index;

/// Precomputed tables for transforms between a bandwidth-`grid_b` sample
/// grid and harmonic coefficients of degree below `coeff_b ≤ grid_b`.
pub struct S2Plan {
    grid_b: usize,
    coeff_b: usize,
    weights: Vec<f64>,
    lambda: Vec<f64>,
    tri: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for S2Plan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("S2Plan")
            .field("grid_b", &self.grid_b)
            .field("coeff_b", &self.coeff_b)
            .finish()
    }
}

impl S2Plan {
    pub fn new(grid_b: usize, coeff_b: usize) -> Result<Self> {
        if grid_b == 0 {
            return Err(HarmonicsError::InvalidBandwidth(grid_b));
        }
        if coeff_b == 0 || coeff_b > grid_b {
            return Err(HarmonicsError::InvalidBandwidth(coeff_b));
        }
        let n = 2 * grid_b;
        let tri = coeff_b * (coeff_b + 1) / 2;
        let mut lambda = vec![0.0; n * tri];
        for j in 0..n {
            lambda_table(coeff_b, grid::theta(grid_b, j), &mut lambda[j * tri..(j + 1) * tri]);
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid_b,
            coeff_b,
            weights: grid::polar_weights(grid_b),
            lambda,
            tri,
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
        4 * self.grid_b * self.grid_b
    }

    pub fn coeff_len(&self) -> usize {
        self.coeff_b * self.coeff_b
    }

    /// Quadrature analysis; `weighted = false` gives the adjoint of synthesis.
    fn analyze(&self, samples: &[f64], out: &mut [Complex64], weighted: bool) {
        let n = 2 * self.grid_b;
        let lb = self.coeff_b;
        assert_eq!(samples.len(), n * n);
        assert_eq!(out.len(), lb * lb);
        out.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let q = grid::azimuth_step(self.grid_b);
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for (dst, &v) in row.iter_mut().zip(&samples[j * n..(j + 1) * n]) {
                *dst = Complex64::new(v, 0.0);
            }
            self.fwd.process(&mut row);
            let scale = if weighted { q * self.weights[j] } else { 1.0 };
            let lam = &self.lambda[j * self.tri..(j + 1) * self.tri];
            for m in 0..lb {
                let pos = row[m] * scale;
                let neg = row[(n - m) % n] * scale;
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                for l in m..lb {
                    let lv = lam[tri_index(l, m)];
                    out[harmonic_index(l, m as i64)] += pos * lv;
                    if m > 0 {
                        out[harmonic_index(l, -(m as i64))] += neg * (sign * lv);
                    }
                }
            }
        }
    }

    /// Synthesis (real part); `row_scale` multiplies each output row.
    fn synthesize(&self, coeffs: &[Complex64], out: &mut [f64], row_scale: Option<&dyn Fn(usize) -> f64>) {
        let n = 2 * self.grid_b;
        let lb = self.coeff_b;
        assert_eq!(coeffs.len(), lb * lb);
        assert_eq!(out.len(), n * n);
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            row.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            let lam = &self.lambda[j * self.tri..(j + 1) * self.tri];
            for m in 0..lb {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut pos = Complex64::new(0.0, 0.0);
                let mut neg = Complex64::new(0.0, 0.0);
                for l in m..lb {
                    let lv = lam[tri_index(l, m)];
                    pos += coeffs[harmonic_index(l, m as i64)] * lv;
                    if m > 0 {
                        neg += coeffs[harmonic_index(l, -(m as i64))] * (sign * lv);
                    }
                }
                row[m] += pos;
                if m > 0 {
                    row[n - m] += neg;
                }
            }
            self.inv.process(&mut row);
            let s = row_scale.map_or(1.0, |f| f(j));
            for (dst, v) in out[j * n..(j + 1) * n].iter_mut().zip(&row) {
                *dst = v.re * s;
            }
        }
    }

    /// Grid samples → coefficients.
    pub fn forward(&self, samples: &[f64], out: &mut [Complex64]) {
        self.analyze(samples, out, true);
    }

    /// Coefficients → grid samples (real part).
    pub fn inverse(&self, coeffs: &[Complex64], out: &mut [f64]) {
        self.synthesize(coeffs, out, None);
    }

    /// Adjoint of [`Self::forward`] under the real inner product.
    pub fn forward_adjoint(&self, grad_coeffs: &[Complex64], out: &mut [f64]) {
        let q = grid::azimuth_step(self.grid_b);
        let w = &self.weights;
        self.synthesize(grad_coeffs, out, Some(&|j| q * w[j]));
    }

    /// Adjoint of [`Self::inverse`] under the real inner product.
    pub fn inverse_adjoint(&self, grad_samples: &[f64], out: &mut [Complex64]) {
        self.analyze(grad_samples, out, false);
    }
}

type PlanCache<T> = Mutex<HashMap<(usize, usize), Arc<T>>>;

/// Shared plan for `(grid_b, coeff_b)`; built once per process.
pub fn s2_plan(grid_b: usize, coeff_b: usize) -> Result<Arc<S2Plan>> {
    static CACHE: OnceLock<PlanCache<S2Plan>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().expect("plan cache poisoned").get(&(grid_b, coeff_b)) {
        return Ok(p.clone());
    }
    let plan = Arc::new(S2Plan::new(grid_b, coeff_b)?);
    cache
        .lock()
        .expect("plan cache poisoned")
        .insert((grid_b, coeff_b), plan.clone());
    Ok(plan)
}

/// `c[0][0]` of the constant unit signal, `2√π`.
pub fn constant_coefficient() -> f64 {
    2.0 * PI.sqrt()
}
