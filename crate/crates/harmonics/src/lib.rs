//! Band-limited spherical signal processing on Driscoll–Healy grids.
//!
//! Provides spherical harmonic and Wigner transforms (with their adjoints,
//! for backpropagation), rotations of sphere and rotation-group signals,
//! the sphere-to-SO(3) correlation, and SO(3) convolution. Harmonics are
//! orthonormal with the Condon–Shortley phase.

pub mod dump;
pub mod error;
pub mod grid;
pub mod legendre;
pub mod ops;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod rotation;
pub mod s2;
pub mod signal;
pub mod so3;
pub mod wigner;

pub use error::{HarmonicsError, Result};
pub use ops::{
    rotate_harmonics, rotate_s2, s2_correlate, s2_correlate_spectral, sht_forward, sht_forward_truncated,
    sht_inverse, so3_convolve, so3_convolve_spectral, so3_fft, so3_ifft, translate_so3, translate_wigner,
};
pub use rotation::RotationZYZ;
pub use s2::{s2_plan, S2Plan};
pub use signal::{harmonic_index, HarmonicCoeffs, SO3Signal, SphericalSignal, WignerCoeffs};
pub use so3::{so3_plan, So3Plan};
pub use wigner::{wigner_count, wigner_index};
