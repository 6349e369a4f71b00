//! Descriptor database files.

use std::io::{BufReader, Read, Write};

use crate::binio::*;
use crate::error::{data_err, Result};
use crate::geometry::io::{read_tum_poses, write_tum};
use crate::geometry::Pose;

const MAGIC: &[u8; 6] = b"I3DDS1";

/// Writes `descs` (all of one length) followed by their poses in TUM format.
pub fn write_descriptors<W: Write>(mut w: W, descs: &[Vec<f64>], poses: &[Pose]) -> Result<()> {
    if descs.len() != poses.len() {
        return data_err("descriptor and pose counts differ");
    }
    let dim = descs.first().map_or(0, |d| d.len());
    if descs.iter().any(|d| d.len() != dim) {
        return data_err("descriptors differ in length");
    }
    write_magic(&mut w, MAGIC)?;
    write_u32(&mut w, dim as u32)?;
    write_u64(&mut w, descs.len() as u64)?;
    for d in descs {
        write_f32s(&mut w, d.iter().copied())?;
    }
    write_tum(&mut w, poses)
}

pub fn read_descriptors<R: Read>(mut r: R) -> Result<(Vec<Vec<f64>>, Vec<Pose>)> {
    expect_magic(&mut r, MAGIC)?;
    let dim = read_u32(&mut r)? as usize;
    let count = read_u64(&mut r)? as usize;
    if dim.saturating_mul(count) > 1 << 32 {
        return data_err("descriptor table too large");
    }
    let mut descs = Vec::with_capacity(count);
    for _ in 0..count {
        descs.push(read_f32s(&mut r, dim)?);
    }
    let poses = read_tum_poses(BufReader::new(r))?;
    if poses.len() != count {
        return data_err(format!("expected {count} poses, found {}", poses.len()));
    }
    Ok((descs, poses))
}
