//! Minimal dense layers with explicit backward passes.
//!
//! Tensors are plain `Vec<f64>` in channel-major `C×H×W` layout. Width is the
//! azimuth axis of an equirectangular grid and is always padded circularly;
//! height is zero-padded.

pub mod conv;
pub mod dense;
pub mod param;

pub use conv::{Conv2d, ConvT2d};
pub use dense::Linear;
pub use param::{Adam, Param};

/// `C = op(A)·op(B) + beta·C` for row-major operands, where `op`
/// optionally transposes. `op(A)` is `m×k`, `op(B)` is `k×n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    gemm_scaled(m, k, n, 1.0, a, ta, b, tb, beta, c);
}

/// `C = alpha·op(A)·op(B) + beta·C`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_scaled(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds checked above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub const LEAK: f64 = 0.2;

pub fn leaky_relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| {
        if *v < 0.0 {
            *v *= LEAK
        }
    });
}

/// Backward of [`leaky_relu`] given its output.
pub fn leaky_relu_backward(out: &[f64], g: &mut [f64]) {
    for (gv, &o) in g.iter_mut().zip(out) {
        if o < 0.0 {
            *gv *= LEAK;
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Backward of an elementwise sigmoid given its output.
pub fn sigmoid_backward(out: &[f64], g: &mut [f64]) {
    for (gv, &o) in g.iter_mut().zip(out) {
        *gv *= o * (1.0 - o);
    }
}

/// Circular shift of every row of a `C×H×W` tensor: `out[.., c] = in[.., c - k]`.
pub fn roll_width(x: &[f64], w: usize, k: i64) -> Vec<f64> {
    let k = k.rem_euclid(w as i64) as usize;
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks_exact(w).zip(out.chunks_exact_mut(w)) {
        dst[k..].copy_from_slice(&src[..w - k]);
        dst[..k].copy_from_slice(&src[w - k..]);
    }
    out
}

/// Azimuth phase in `0..period` with the largest polyphase column energy of
/// a `C×H×W` tensor.
///
/// Shifting the input by `k` columns moves the result to `(phase + k) mod
/// period`, except on exact energy ties, which resolve to the lowest phase.
/// Networks that roll their input back by this phase before a stride-`period`
/// pipeline become exactly equivariant to every integer column shift.
pub fn canonical_phase(x: &[f64], h: usize, w: usize, period: usize) -> usize {
    let plane = h * w;
    let mut energy = vec![0.0; w];
    for chan in x.chunks_exact(plane) {
        for row in chan.chunks_exact(w) {
            for (e, v) in energy.iter_mut().zip(row) {
                *e += v * v;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for p in 0..period {
        // order-independent sum so shifted inputs give bit-identical energies
        let mut vals: Vec<f64> = energy.iter().skip(p).step_by(period).copied().collect();
        vals.sort_by(f64::total_cmp);
        let e: f64 = vals.iter().sum();
        if e > best.0 {
            best = (e, p);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn phase_follows_shifts() {
        let x: Vec<f64> = (0..2 * 4 * 16).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let p = canonical_phase(&x, 4, 16, 8);
        for k in 0..16 {
            let shifted = roll_width(&x, 16, k);
            assert_eq!(canonical_phase(&shifted, 4, 16, 8), (p + k as usize) % 8);
        }
    }

    #[test]
    fn roll_inverts() {
        let x: Vec<f64> = (0..12).map(|v| v as f64).collect();
        assert_eq!(roll_width(&roll_width(&x, 4, 3), 4, -3), x);
        assert_eq!(roll_width(&x, 4, 1)[..4], [3.0, 0.0, 1.0, 2.0]);
    }
}
