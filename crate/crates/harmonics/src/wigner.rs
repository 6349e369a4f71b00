//! Wigner small-d functions `d^l_{mn}(β)` and full `D^l_{mn}(α, β, γ)`.
//!
//! Convention: `D^l_{mn}(α,β,γ) = e^{-imα} d^l_{mn}(β) e^{-inγ}` for the
//! rotation `R_z(α) R_y(β) R_z(γ)`, so that
//! `Y_l^n(R⁻¹x) = Σ_m D^l_{mn}(R) Y_l^m(x)`.
//! Values come from a closed-form seed at `l = max(|m|,|n|)` followed by the
//! three-term recurrence in `l`, which stays accurate for large degrees.

use num_complex::Complex64;

use crate::rotation::RotationZYZ;

fn ln_factorial(n: i64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Closed-form `d^l_{mn}(β)` at the lowest degree `l = max(|m|,|n|)`, where
/// the general sum collapses to a single term.
fn seed(l: i64, m: i64, n: i64, beta: f64) -> f64 {
    let (hs, hc) = (beta / 2.0).sin_cos();
    let s_lo = 0.max(n - m);
    let s_hi = (l + n).min(l - m);
    let mut acc = 0.0;
    for s in s_lo..=s_hi {
        let cpow = 2 * l + n - m - 2 * s;
        let spow = m - n + 2 * s;
        let ln_mag = 0.5 * (ln_factorial(l + m) + ln_factorial(l - m) + ln_factorial(l + n) + ln_factorial(l - n))
            - ln_factorial(l + n - s)
            - ln_factorial(s)
            - ln_factorial(m - n + s)
            - ln_factorial(l - m - s);
        let sign = if (m - n + s).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        acc += sign * ln_mag.exp() * hc.powi(cpow as i32) * hs.powi(spow as i32);
    }
    acc
}

/// Writes `d^l_{mn}(β)` for `l = max(|m|,|n|) .. lmax-1` into `out`.
pub fn d_column(m: i64, n: i64, lmax: usize, beta: f64, out: &mut [f64]) {
    let l0 = m.abs().max(n.abs());
    if l0 as usize >= lmax {
        return;
    }
    let count = lmax - l0 as usize;
    assert!(out.len() >= count);
    let cb = beta.cos();
    out[0] = seed(l0, m, n, beta);
    let (mf, nf) = (m as f64, n as f64);
    for idx in 1..count {
        let j = (l0 as usize + idx - 1) as f64;
        let prev = out[idx - 1];
        let prev2 = if idx >= 2 { out[idx - 2] } else { 0.0 };
        if j == 0.0 {
            // only reached for m = n = 0
            out[idx] = cb;
            continue;
        }
        let jp = j + 1.0;
        let denom = j * ((jp * jp - mf * mf) * (jp * jp - nf * nf)).sqrt();
        let a = (2.0 * j + 1.0) * (j * jp * cb - mf * nf);
        let b = jp * ((j * j - mf * mf) * (j * j - nf * nf)).sqrt();
        out[idx] = (a * prev - b * prev2) / denom;
    }
}

/// Packed offset of degree `l` in a per-channel Wigner coefficient block.
#[inline]
pub fn degree_offset(l: usize) -> usize {
    // Σ_{k<l} (2k+1)² = l(4l²-1)/3
    (4 * l * l * l - l) / 3
}

/// Number of Wigner coefficients per channel below bandwidth `b`.
#[inline]
pub fn wigner_count(b: usize) -> usize {
    degree_offset(b)
}

/// Index of `(l, m, n)` inside a packed Wigner block.
#[inline]
pub fn wigner_index(l: usize, m: i64, n: i64) -> usize {
    let w = 2 * l + 1;
    degree_offset(l) + (m + l as i64) as usize * w + (n + l as i64) as usize
}

/// All matrices `d^l(β)` for `l < lmax`, packed like Wigner coefficients.
pub fn d_matrices(lmax: usize, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; wigner_count(lmax)];
    let lm = lmax as i64;
    let mut col = vec![0.0; lmax];
    for m in -(lm - 1)..lm {
        for n in -(lm - 1)..lm {
            let l0 = m.abs().max(n.abs()) as usize;
            d_column(m, n, lmax, beta, &mut col);
            for l in l0..lmax {
                out[wigner_index(l, m, n)] = col[l - l0];
            }
        }
    }
    out
}

/// All matrices `D^l(R)` for `l < lmax`, packed like Wigner coefficients.
pub fn big_d_matrices(lmax: usize, rot: &RotationZYZ) -> Vec<Complex64> {
    let d = d_matrices(lmax, rot.beta);
    let mut out = vec![Complex64::new(0.0, 0.0); d.len()];
    for l in 0..lmax {
        let li = l as i64;
        for m in -li..=li {
            let em = Complex64::from_polar(1.0, -(m as f64) * rot.alpha);
            for n in -li..=li {
                let en = Complex64::from_polar(1.0, -(n as f64) * rot.gamma);
                let i = wigner_index(l, m, n);
                out[i] = em * en * d[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_one_matrix() {
        let b = 0.83_f64;
        let d = d_matrices(2, b);
        let (s, c) = b.sin_cos();
        let r2 = 2f64.sqrt();
        let expect = [
            ((1, 1), (1.0 + c) / 2.0),
            ((1, 0), -s / r2),
            ((1, -1), (1.0 - c) / 2.0),
            ((0, 1), s / r2),
            ((0, 0), c),
            ((0, -1), -s / r2),
            ((-1, 1), (1.0 - c) / 2.0),
            ((-1, 0), s / r2),
            ((-1, -1), (1.0 + c) / 2.0),
        ];
        for ((m, n), v) in expect {
            let got = d[wigner_index(1, m, n)];
            assert!((got - v).abs() < 1e-14, "d1[{m},{n}] = {got}, want {v}");
        }
    }

    #[test]
    fn d_matrices_are_orthogonal() {
        let lmax = 40;
        let d = d_matrices(lmax, 1.234);
        for l in [0usize, 5, 17, 39] {
            let w = 2 * l + 1;
            let off = degree_offset(l);
            for a in 0..w {
                for b in 0..w {
                    let dot: f64 = (0..w).map(|k| d[off + a * w + k] * d[off + b * w + k]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-11, "l={l} ({a},{b}) {dot}");
                }
            }
        }
    }

    #[test]
    fn identity_beta_is_identity() {
        let d = d_matrices(6, 0.0);
        for l in 0..6usize {
            let li = l as i64;
            for m in -li..=li {
                for n in -li..=li {
                    let want = if m == n { 1.0 } else { 0.0 };
                    assert!((d[wigner_index(l, m, n)] - want).abs() < 1e-14);
                }
            }
        }
    }
}
