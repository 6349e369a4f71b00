use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};

/// Rotation `R_z(α) R_y(β) R_z(γ)` in ZYZ Euler angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationZYZ {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl RotationZYZ {
    pub const IDENTITY: RotationZYZ = RotationZYZ {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
    };

    /// Normalizes `α, γ` into `[0, 2π)`; `β` must lie in `[0, π]`.
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        assert!((0.0..=PI).contains(&beta), "beta {beta} outside [0, π]");
        Self {
            alpha: wrap(alpha),
            beta,
            gamma: wrap(gamma),
        }
    }

    /// Rotation about +z by `angle` radians.
    pub fn about_z(angle: f64) -> Self {
        Self::new(angle, 0.0, 0.0)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let z = Vector3::z_axis();
        let y = Vector3::y_axis();
        (Rotation3::from_axis_angle(&z, self.alpha)
            * Rotation3::from_axis_angle(&y, self.beta)
            * Rotation3::from_axis_angle(&z, self.gamma))
        .into_inner()
    }

    /// Euler angles of a rotation matrix. `α + γ` (or `α - γ` near `β = π`)
    /// comes from the upper 2×2 block, which stays well conditioned as `β`
    /// approaches the poles where `α` alone is ill defined.
    pub fn from_matrix(r: &Matrix3<f64>) -> Self {
        let sb = r[(2, 0)].hypot(r[(2, 1)]);
        let cb = r[(2, 2)];
        let beta = sb.atan2(cb);
        let sum = (r[(1, 0)] - r[(0, 1)]).atan2(r[(0, 0)] + r[(1, 1)]);
        let diff = (-(r[(1, 0)] + r[(0, 1)])).atan2(r[(1, 1)] - r[(0, 0)]);
        if sb > 1e-12 {
            let alpha = r[(1, 2)].atan2(r[(0, 2)]);
            let gamma = if cb >= 0.0 { sum - alpha } else { alpha - diff };
            Self::new(alpha, beta, gamma)
        } else if cb > 0.0 {
            Self::new(sum, 0.0, 0.0)
        } else {
            Self::new(diff, PI, 0.0)
        }
    }

    /// `self ∘ other`, i.e. apply `other` first.
    pub fn compose(&self, other: &RotationZYZ) -> Self {
        Self::from_matrix(&(self.matrix() * other.matrix()))
    }

    pub fn inverse(&self) -> Self {
        Self::from_matrix(&self.matrix().transpose())
    }

    /// Rotates a unit vector.
    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix() * v
    }
}

/// Unit vector at polar angle `θ` (from +z) and azimuth `φ` (from +x toward +y).
pub fn unit_vector(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Inverse of [`unit_vector`]; `φ ∈ [0, 2π)`.
pub fn angles_of(v: &Vector3<f64>) -> (f64, f64) {
    let r = v.norm();
    let theta = (v.z / r).clamp(-1.0, 1.0).acos();
    let phi = wrap(v.y.atan2(v.x));
    (theta, phi)
}
