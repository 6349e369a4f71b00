//! Driscoll–Healy equiangular sampling.
//!
//! A bandwidth-`B` grid has `2B` polar samples `θ_j = (2j+1)π/4B` and `2B`
//! azimuthal samples `φ_k = 2πk/2B`. The same points serve as the `β` and
//! `α`/`γ` axes of the rotation-group grid.

use std::f64::consts::PI;

/// Polar sample `θ_j` of a bandwidth-`b` grid.
#[inline]
pub fn theta(b: usize, j: usize) -> f64 {
    PI * (2 * j + 1) as f64 / (4 * b) as f64
}

/// Azimuthal sample `φ_k` of a bandwidth-`b` grid.
#[inline]
pub fn phi(b: usize, k: usize) -> f64 {
    2.0 * PI * k as f64 / (2 * b) as f64
}

/// Polar quadrature weights `a_j` with `Σ_j a_j g(θ_j) = ∫₀^π g(θ) sin θ dθ`
/// for every polynomial `g` in `cos θ` of degree below `2b`.
pub fn polar_weights(b: usize) -> Vec<f64> {
    (0..2 * b)
        .map(|j| {
            let t = theta(b, j);
            let s: f64 = (0..b)
                .map(|k| {
                    let odd = (2 * k + 1) as f64;
                    (odd * t).sin() / odd
                })
                .sum();
            2.0 / b as f64 * t.sin() * s
        })
        .collect()
}

/// Sample spacing `2π/2b` of the azimuthal axes.
#[inline]
pub fn azimuth_step(b: usize) -> f64 {
    PI / b as f64
}
