//! Orthonormal associated Legendre functions with Condon–Shortley phase.
//!
//! `lambda(l, m, θ)` is the polar part of `Y_l^m(θ, φ) = λ_l^m(θ) e^{imφ}`
//! for `m ≥ 0`; negative orders follow from `λ_l^{-m} = (-1)^m λ_l^m`.

use std::f64::consts::PI;

/// Packed index of `(l, m)` with `0 ≤ m ≤ l`.
#[inline]
pub fn tri_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Fills `out[tri_index(l, m)]` with `λ_l^m(θ)` for all `l < lmax`.
pub fn lambda_table(lmax: usize, theta: f64, out: &mut [f64]) {
    assert!(out.len() >= lmax * (lmax + 1) / 2);
    if lmax == 0 {
        return;
    }
    let (s, c) = theta.sin_cos();
    let mut diag = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..lmax {
        if m > 0 {
            diag *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
        }
        out[tri_index(m, m)] = diag;
        if m + 1 < lmax {
            out[tri_index(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * c * diag;
        }
        for l in m + 2..lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            out[tri_index(l, m)] = a * (c * out[tri_index(l - 1, m)] - b * out[tri_index(l - 2, m)]);
        }
    }
}

/// `λ_l^m(θ)` for any `|m| ≤ l`.
pub fn lambda(l: usize, m: i64, theta: f64) -> f64 {
    let mut table = vec![0.0; (l + 1) * (l + 2) / 2];
    lambda_table(l + 1, theta, &mut table);
    let v = table[tri_index(l, m.unsigned_abs() as usize)];
    if m < 0 && m % 2 != 0 {
        -v
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_orders_match_closed_forms() {
        for &t in &[0.1, 0.7, 1.3, 2.9] {
            let (s, c) = f64::sin_cos(t);
            assert!((lambda(0, 0, t) - (1.0 / (4.0 * PI)).sqrt()).abs() < 1e-15);
            assert!((lambda(1, 0, t) - (3.0 / (4.0 * PI)).sqrt() * c).abs() < 1e-15);
            assert!((lambda(1, 1, t) + (3.0 / (8.0 * PI)).sqrt() * s).abs() < 1e-15);
            assert!((lambda(1, -1, t) - (3.0 / (8.0 * PI)).sqrt() * s).abs() < 1e-15);
            let y20 = (5.0 / (16.0 * PI)).sqrt() * (3.0 * c * c - 1.0);
            assert!((lambda(2, 0, t) - y20).abs() < 1e-14);
            let y22 = (15.0 / (32.0 * PI)).sqrt() * s * s;
            assert!((lambda(2, 2, t) - y22).abs() < 1e-14);
        }
    }
}
