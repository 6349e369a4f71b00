//! Direct-summation reference implementations.
//!
//! Everything here avoids the FFT, the Legendre recurrence, and the Wigner
//! recurrence so the fast transforms can be checked against it. Costs are
//! `O(B⁴)` and worse; use only at small bandwidths.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::grid;
use crate::rotation::{angles_of, unit_vector, RotationZYZ};
use crate::signal::{HarmonicCoeffs, SO3Signal, SphericalSignal, WignerCoeffs};
use crate::wigner::wigner_index;

fn factorial(n: i64) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Full factorial-sum formula for `d^l_{mn}(β)`.
pub fn wigner_d(l: i64, m: i64, n: i64, beta: f64) -> f64 {
    let (hs, hc) = (beta / 2.0).sin_cos();
    let pre = (factorial(l + m) * factorial(l - m) * factorial(l + n) * factorial(l - n)).sqrt();
    let mut acc = 0.0;
    for s in 0..=(2 * l) {
        let (a, b, c) = (l + n - s, m - n + s, l - m - s);
        if a < 0 || b < 0 || c < 0 {
            continue;
        }
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * hc.powi((2 * l + n - m - 2 * s) as i32) * hs.powi((m - n + 2 * s) as i32)
            / (factorial(a) * factorial(s) * factorial(b) * factorial(c));
    }
    pre * acc
}

pub fn wigner_big_d(l: i64, m: i64, n: i64, rot: &RotationZYZ) -> Complex64 {
    Complex64::from_polar(1.0, -(m as f64) * rot.alpha - (n as f64) * rot.gamma) * wigner_d(l, m, n, rot.beta)
}

/// `Y_l^m(θ, φ) = √((2l+1)/4π) e^{imφ} d^l_{m0}(θ)`.
pub fn ylm(l: i64, m: i64, theta: f64, phi: f64) -> Complex64 {
    let norm = ((2 * l + 1) as f64 / (4.0 * PI)).sqrt();
    Complex64::from_polar(norm * wigner_d(l, m, 0, theta), m as f64 * phi)
}

/// `Σ c[l][m] Y_l^m(θ, φ)` for one channel (real part).
pub fn eval_s2(coeffs: &HarmonicCoeffs, channel: usize, theta: f64, phi: f64) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..coeffs.bandwidth() as i64 {
        for m in -l..=l {
            acc += coeffs.get(channel, l as usize, m) * ylm(l, m, theta, phi);
        }
    }
    acc.re
}

/// `Σ f̂[l][m][n] D^l_{mn}(R)` for one channel (real part).
pub fn eval_so3(coeffs: &WignerCoeffs, channel: usize, rot: &RotationZYZ) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..coeffs.bandwidth() as i64 {
        for m in -l..=l {
            for n in -l..=l {
                acc += coeffs.get(channel, l as usize, m, n) * wigner_big_d(l, m, n, rot);
            }
        }
    }
    acc.re
}

/// Quadrature sum `c[l][m] = Σ_{j,k} w_j f(θ_j, φ_k) conj(Y_l^m)`.
pub fn sht_forward(sig: &SphericalSignal) -> HarmonicCoeffs {
    let b = sig.bandwidth();
    let n = 2 * b;
    let w = grid::polar_weights(b);
    let q = grid::azimuth_step(b);
    let mut out = HarmonicCoeffs::zeros(b, sig.channels()).unwrap();
    for c in 0..sig.channels() {
        for l in 0..b as i64 {
            for m in -l..=l {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    for k in 0..n {
                        let y = ylm(l, m, grid::theta(b, j), grid::phi(b, k));
                        acc += y.conj() * (sig.get(c, j, k) * w[j] * q);
                    }
                }
                out.set(c, l as usize, m, acc);
            }
        }
    }
    out
}

/// Synthesis by direct evaluation at each grid point.
pub fn sht_inverse(coeffs: &HarmonicCoeffs) -> SphericalSignal {
    let b = coeffs.bandwidth();
    let n = 2 * b;
    let mut data = Vec::with_capacity(coeffs.channels() * n * n);
    for c in 0..coeffs.channels() {
        for j in 0..n {
            for k in 0..n {
                data.push(eval_s2(coeffs, c, grid::theta(b, j), grid::phi(b, k)));
            }
        }
    }
    SphericalSignal::from_grid(b, coeffs.channels(), data).unwrap()
}

fn grid_rotation(b: usize, j: usize, k: usize, g: usize) -> RotationZYZ {
    RotationZYZ::new(grid::phi(b, k), grid::theta(b, j), grid::phi(b, g))
}

/// Quadrature sum `f̂[l][m][n] = (2l+1)/8π² Σ_R w_R f(R) conj(D^l_{mn}(R))`.
pub fn so3_forward(sig: &SO3Signal) -> WignerCoeffs {
    let b = sig.bandwidth();
    let n = 2 * b;
    let w = grid::polar_weights(b);
    let q = grid::azimuth_step(b);
    let mut out = WignerCoeffs::zeros(b, sig.channels()).unwrap();
    for c in 0..sig.channels() {
        for l in 0..b as i64 {
            let norm = (2 * l + 1) as f64 / (8.0 * PI * PI);
            for m in -l..=l {
                for nn in -l..=l {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        for k in 0..n {
                            for g in 0..n {
                                let d = wigner_big_d(l, m, nn, &grid_rotation(b, j, k, g));
                                acc += d.conj() * (sig.get(c, j, k, g) * w[j] * q * q);
                            }
                        }
                    }
                    out.set(c, l as usize, m, nn, acc * norm);
                }
            }
        }
    }
    out
}

/// Synthesis by direct evaluation at each grid rotation.
pub fn so3_inverse(coeffs: &WignerCoeffs) -> SO3Signal {
    let b = coeffs.bandwidth();
    let n = 2 * b;
    let mut data = Vec::with_capacity(coeffs.channels() * n * n * n);
    for c in 0..coeffs.channels() {
        for j in 0..n {
            for k in 0..n {
                for g in 0..n {
                    data.push(eval_so3(coeffs, c, &grid_rotation(b, j, k, g)));
                }
            }
        }
    }
    SO3Signal::from_grid(b, coeffs.channels(), data).unwrap()
}

/// `out(R) = Σ_c Σ_x w_x h_c(R⁻¹x) f_c(x)` with `h` evaluated off-grid from
/// its quadrature coefficients.
pub fn s2_correlate(f: &SphericalSignal, h: &SphericalSignal) -> SO3Signal {
    let b = f.bandwidth();
    let n = 2 * b;
    let w = grid::polar_weights(b);
    let q = grid::azimuth_step(b);
    let hc = sht_forward(h);
    let mut data = Vec::with_capacity(n * n * n);
    for j in 0..n {
        for k in 0..n {
            for g in 0..n {
                let rinv = grid_rotation(b, j, k, g).inverse();
                let mut acc = 0.0;
                for c in 0..f.channels() {
                    for jj in 0..n {
                        for kk in 0..n {
                            let x = unit_vector(grid::theta(b, jj), grid::phi(b, kk));
                            let (t, p) = angles_of(&rinv.apply(&x));
                            acc += w[jj] * q * f.get(c, jj, kk) * eval_s2(&hc, c, t, p);
                        }
                    }
                }
                data.push(acc);
            }
        }
    }
    SO3Signal::from_grid(b, 1, data).unwrap()
}

/// Double quadrature `out(R) = Σ_c Σ_Q w_Q f_c(R⁻¹Q) h_c(Q)`.
pub fn so3_convolve(f: &SO3Signal, h: &SO3Signal) -> SO3Signal {
    let b = f.bandwidth();
    let n = 2 * b;
    let w = grid::polar_weights(b);
    let q = grid::azimuth_step(b);
    let fc = so3_forward(f);
    let mut data = Vec::with_capacity(n * n * n);
    for j in 0..n {
        for k in 0..n {
            for g in 0..n {
                let rinv = grid_rotation(b, j, k, g).inverse();
                let mut acc = 0.0;
                for c in 0..f.channels() {
                    for jj in 0..n {
                        for kk in 0..n {
                            for gg in 0..n {
                                let qrot = grid_rotation(b, jj, kk, gg);
                                let arg = rinv.compose(&qrot);
                                acc += w[jj] * q * q * eval_so3(&fc, c, &arg) * h.get(c, jj, kk, gg);
                            }
                        }
                    }
                }
                data.push(acc);
            }
        }
    }
    SO3Signal::from_grid(b, 1, data).unwrap()
}

/// Index helper re-exported for tests that build coefficient blocks by hand.
pub fn windex(l: usize, m: i64, n: i64) -> usize {
    wigner_index(l, m, n)
}
