//! Transforms, rotations, and the two equivariant products.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{HarmonicsError, Result};
use crate::rotation::RotationZYZ;
use crate::s2::s2_plan;
use crate::signal::{harmonic_index, HarmonicCoeffs, SO3Signal, SphericalSignal, WignerCoeffs};
use crate::so3::so3_plan;
use crate::wigner::{big_d_matrices, wigner_index};

/// Harmonic coefficients of every channel, `l < B`.
pub fn sht_forward(sig: &SphericalSignal) -> Result<HarmonicCoeffs> {
    sht_forward_truncated(sig, sig.bandwidth())
}

/// Harmonic coefficients below `coeff_b` computed from a finer grid.
pub fn sht_forward_truncated(sig: &SphericalSignal, coeff_b: usize) -> Result<HarmonicCoeffs> {
    let plan = s2_plan(sig.bandwidth(), coeff_b)?;
    let mut out = HarmonicCoeffs::zeros(coeff_b, sig.channels())?;
    for c in 0..sig.channels() {
        plan.forward(sig.channel(c), out.channel_mut(c));
    }
    Ok(out)
}

pub fn sht_inverse(coeffs: &HarmonicCoeffs) -> Result<SphericalSignal> {
    let b = coeffs.bandwidth();
    let plan = s2_plan(b, b)?;
    let mut out = SphericalSignal::zeros(b, coeffs.channels())?;
    for c in 0..coeffs.channels() {
        plan.inverse(coeffs.channel(c), out.channel_mut(c));
    }
    Ok(out)
}

/// Coefficients of `f(R⁻¹x)`: `c'[l][m] = Σ_n D^l_{mn}(R) c[l][n]`.
pub fn rotate_harmonics(coeffs: &HarmonicCoeffs, rot: &RotationZYZ) -> HarmonicCoeffs {
    let b = coeffs.bandwidth();
    let d = big_d_matrices(b, rot);
    let mut out = coeffs.clone();
    for c in 0..coeffs.channels() {
        let src = coeffs.channel(c);
        let dst = out.channel_mut(c);
        for l in 0..b {
            let li = l as i64;
            for m in -li..=li {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in -li..=li {
                    acc += d[wigner_index(l, m, n)] * src[harmonic_index(l, n)];
                }
                dst[harmonic_index(l, m)] = acc;
            }
        }
    }
    out
}

/// `(L_R f)(x) = f(R⁻¹x)` computed spectrally.
pub fn rotate_s2(sig: &SphericalSignal, rot: &RotationZYZ) -> Result<SphericalSignal> {
    let coeffs = sht_forward(sig)?;
    sht_inverse(&rotate_harmonics(&coeffs, rot))
}

/// Wigner coefficients of `R ↦ Σ_c ⟨L_R h_c, f_c⟩` below `out_b`:
/// `ô[l][m][n] = Σ_c conj(f̂_c[l][m]) ĥ_c[l][n]`.
pub fn s2_correlate_spectral(f: &HarmonicCoeffs, h: &HarmonicCoeffs, out_b: usize) -> Result<WignerCoeffs> {
    if f.bandwidth() != h.bandwidth() {
        return Err(HarmonicsError::BandwidthMismatch(f.bandwidth(), h.bandwidth()));
    }
    if f.channels() != h.channels() {
        return Err(HarmonicsError::ChannelMismatch(f.channels(), h.channels()));
    }
    if out_b == 0 || out_b > f.bandwidth() {
        return Err(HarmonicsError::InvalidBandwidth(out_b));
    }
    let mut out = WignerCoeffs::zeros(out_b, 1)?;
    let dst = out.channel_mut(0);
    for c in 0..f.channels() {
        let fc = f.channel(c);
        let hc = h.channel(c);
        for l in 0..out_b {
            let li = l as i64;
            for m in -li..=li {
                let fm = fc[harmonic_index(l, m)].conj();
                for n in -li..=li {
                    dst[wigner_index(l, m, n)] += fm * hc[harmonic_index(l, n)];
                }
            }
        }
    }
    Ok(out)
}

/// Lifts two sphere signals to the rotation group:
/// `out(R) = Σ_c ∫ h_c(R⁻¹x) f_c(x) dx`.
pub fn s2_correlate(f: &SphericalSignal, h: &SphericalSignal) -> Result<SO3Signal> {
    if f.bandwidth() != h.bandwidth() {
        return Err(HarmonicsError::BandwidthMismatch(f.bandwidth(), h.bandwidth()));
    }
    let b = f.bandwidth();
    let spec = s2_correlate_spectral(&sht_forward(f)?, &sht_forward(h)?, b)?;
    so3_ifft(&spec)
}

pub fn so3_fft(sig: &SO3Signal) -> Result<WignerCoeffs> {
    let b = sig.bandwidth();
    let plan = so3_plan(b, b)?;
    let mut out = WignerCoeffs::zeros(b, sig.channels())?;
    for c in 0..sig.channels() {
        plan.forward(sig.channel(c), out.channel_mut(c));
    }
    Ok(out)
}

pub fn so3_ifft(coeffs: &WignerCoeffs) -> Result<SO3Signal> {
    let b = coeffs.bandwidth();
    let plan = so3_plan(b, b)?;
    let mut out = SO3Signal::zeros(b, coeffs.channels())?;
    for c in 0..coeffs.channels() {
        plan.inverse(coeffs.channel(c), out.channel_mut(c));
    }
    Ok(out)
}

/// Scale `8π²/(2l+1)` relating Wigner-coefficient products to group integrals.
#[inline]
pub fn convolution_scale(l: usize) -> f64 {
    8.0 * PI * PI / (2 * l + 1) as f64
}

/// Spectral form of [`so3_convolve`]: `ô^l = 8π²/(2l+1) Σ_c Ĥ_c^l (F̂_c^l)†`.
pub fn so3_convolve_spectral(f: &WignerCoeffs, h: &WignerCoeffs) -> Result<WignerCoeffs> {
    if f.bandwidth() != h.bandwidth() {
        return Err(HarmonicsError::BandwidthMismatch(f.bandwidth(), h.bandwidth()));
    }
    if f.channels() != h.channels() {
        return Err(HarmonicsError::ChannelMismatch(f.channels(), h.channels()));
    }
    let b = f.bandwidth();
    let mut out = WignerCoeffs::zeros(b, 1)?;
    for c in 0..f.channels() {
        let fc = f.channel(c);
        let hc = h.channel(c);
        let dst = out.channel_mut(0);
        for l in 0..b {
            let li = l as i64;
            let s = convolution_scale(l);
            for m in -li..=li {
                for n in -li..=li {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for p in -li..=li {
                        acc += hc[wigner_index(l, m, p)] * fc[wigner_index(l, n, p)].conj();
                    }
                    dst[wigner_index(l, m, n)] += acc * s;
                }
            }
        }
    }
    Ok(out)
}

/// `out(R) = Σ_c ∫ f_c(R⁻¹Q) h_c(Q) dQ`.
///
/// The result is equivariant in `h`: translating `h` by `Q` translates the
/// output by `Q`.
pub fn so3_convolve(f: &SO3Signal, h: &SO3Signal) -> Result<SO3Signal> {
    if f.bandwidth() != h.bandwidth() {
        return Err(HarmonicsError::BandwidthMismatch(f.bandwidth(), h.bandwidth()));
    }
    let spec = so3_convolve_spectral(&so3_fft(f)?, &so3_fft(h)?)?;
    so3_ifft(&spec)
}

/// Coefficients of `(L_Q f)(R) = f(Q⁻¹R)`: `ô'^l = conj(D^l(Q)) ô^l`.
pub fn translate_wigner(coeffs: &WignerCoeffs, rot: &RotationZYZ) -> WignerCoeffs {
    let b = coeffs.bandwidth();
    let d = big_d_matrices(b, rot);
    let mut out = coeffs.clone();
    for c in 0..coeffs.channels() {
        let src = coeffs.channel(c);
        let dst = out.channel_mut(c);
        for l in 0..b {
            let li = l as i64;
            for p in -li..=li {
                for n in -li..=li {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in -li..=li {
                        acc += d[wigner_index(l, p, m)].conj() * src[wigner_index(l, m, n)];
                    }
                    dst[wigner_index(l, p, n)] = acc;
                }
            }
        }
    }
    out
}

/// `(L_Q f)(R) = f(Q⁻¹R)` computed spectrally.
pub fn translate_so3(sig: &SO3Signal, rot: &RotationZYZ) -> Result<SO3Signal> {
    so3_ifft(&translate_wigner(&so3_fft(sig)?, rot))
}
