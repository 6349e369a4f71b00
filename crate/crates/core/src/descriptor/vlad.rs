//! Soft-assignment VLAD aggregation.

use rand::Rng;

use crate::error::{data_err, Result};
use crate::nn::{gemm, Param};

/// Per-cell local features, `[cell][dim]` with cells in row-major grid order.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalFeatureField {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl LocalFeatureField {
    pub fn new(rows: usize, cols: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * dim || dim == 0 {
            return data_err("feature field size does not match its shape");
        }
        Ok(LocalFeatureField { rows, cols, dim, data })
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// `K` centers with assignment logits `a_k(x) = w_k·x + b_k`.
#[derive(Clone, Debug)]
pub struct VladCodebook {
    pub centers: Param,
    pub assign_w: Param,
    pub assign_b: Param,
}

impl VladCodebook {
    pub fn new(k: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let centers = Param::normal("vlad.centers", &[k, dim], 1.0 / (dim as f64).sqrt(), rng);
        let mut cb = VladCodebook {
            centers,
            assign_w: Param::zeros("vlad.assign_w", &[k, dim]),
            assign_b: Param::zeros("vlad.assign_b", &[k]),
        };
        cb.reset_assignment(1.0);
        cb
    }

    pub fn clusters(&self) -> usize {
        self.centers.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.centers.shape[1]
    }

    /// Sets the assignment so that `softmax_k(−α‖x − c_k‖²)` is reproduced.
    pub fn reset_assignment(&mut self, alpha: f64) {
        let d = self.dim();
        for (k, c) in self.centers.value.chunks_exact(d).enumerate() {
            let mut sq = 0.0;
            for (j, &v) in c.iter().enumerate() {
                self.assign_w.value[k * d + j] = 2.0 * alpha * v;
                sq += v * v;
            }
            self.assign_b.value[k] = -alpha * sq;
        }
        self.assign_w.round_to_f32();
        self.assign_b.round_to_f32();
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.centers, &self.assign_w, &self.assign_b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.centers, &mut self.assign_w, &mut self.assign_b]
    }
}

/// Row-wise softmax of `cells×k` assignment logits.
pub(crate) fn soft_assign(field: &LocalFeatureField, cb: &VladCodebook) -> Vec<f64> {
    let (n, k, d) = (field.cells(), cb.clusters(), field.dim);
    let mut s = vec![0.0; n * k];
    gemm(n, d, k, &field.data, false, &cb.assign_w.value, true, 0.0, &mut s);
    for row in s.chunks_exact_mut(k) {
        let mut mx = f64::NEG_INFINITY;
        for (v, b) in row.iter_mut().zip(&cb.assign_b.value) {
            *v += b;
            mx = mx.max(*v);
        }
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    s
}

/// Residual sums `V[k][d] = Σ_cells a_k(x)(x_d − c_kd)` given assignments.
pub(crate) fn residuals(field: &LocalFeatureField, cb: &VladCodebook, s: &[f64]) -> Vec<f64> {
    let (n, k, d) = (field.cells(), cb.clusters(), field.dim);
    let mut v = vec![0.0; k * d];
    gemm(k, n, d, s, true, &field.data, false, 0.0, &mut v);
    for c in 0..k {
        let mass: f64 = (0..n).map(|i| s[i * k + c]).sum();
        for j in 0..d {
            v[c * d + j] -= mass * cb.centers.value[c * d + j];
        }
    }
    v
}

/// Raw `K·D` VLAD vector of a feature field.
pub fn vlad_aggregate(field: &LocalFeatureField, codebook: &VladCodebook) -> Result<Vec<f64>> {
    if field.dim != codebook.dim() {
        return data_err(format!("feature dim {} does not match codebook dim {}", field.dim, codebook.dim()));
    }
    let s = soft_assign(field, codebook);
    Ok(residuals(field, codebook, &s))
}
