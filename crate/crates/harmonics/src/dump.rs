//! Debug dump of harmonic coefficients.
//!
//! Layout: magic `I3DHC1`, `u32` bandwidth, `u32` channels, then every
//! coefficient as an interleaved `(re, im)` pair of little-endian `f32`.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{HarmonicsError, Result};
use crate::signal::HarmonicCoeffs;

pub const MAGIC: &[u8; 6] = b"I3DHC1";

pub fn write_coeffs<W: Write>(mut w: W, coeffs: &HarmonicCoeffs) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(coeffs.bandwidth() as u32).to_le_bytes())?;
    w.write_all(&(coeffs.channels() as u32).to_le_bytes())?;
    for c in coeffs.data() {
        w.write_all(&(c.re as f32).to_le_bytes())?;
        w.write_all(&(c.im as f32).to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

pub fn read_coeffs<R: Read>(mut r: R) -> Result<HarmonicCoeffs> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HarmonicsError::Format("missing I3DHC1 magic".into()));
    }
    let b = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    let mut data = Vec::with_capacity(b * b * channels);
    for _ in 0..b * b * channels {
        let re = read_f32(&mut r)? as f64;
        let im = read_f32(&mut r)? as f64;
        data.push(Complex64::new(re, im));
    }
    HarmonicCoeffs::from_data(b, channels, data)
}
