//! Point cloud, range image, PNG and TUM trajectory files.

use std::io::{BufRead, Cursor, Read, Write};

use nalgebra::{Quaternion, Vector3};

use super::image::{EquirectImage, Panorama, RangeImage};
use super::map::PointCloudMap;
use super::pose::{Pose, Trajectory};
use crate::binio::*;
use crate::error::{data_err, Error, Result};

const PC_MAGIC: &[u8; 6] = b"I3DPC1";
const RG_MAGIC: &[u8; 6] = b"I3DRG1";

pub fn write_point_cloud<W: Write>(mut w: W, map: &PointCloudMap) -> Result<()> {
    write_magic(&mut w, PC_MAGIC)?;
    write_u64(&mut w, map.len() as u64)?;
    let vals = map
        .points()
        .iter()
        .zip(map.albedo())
        .flat_map(|(p, &a)| [p.x, p.y, p.z, a]);
    write_f32s(&mut w, vals)
}

pub fn read_point_cloud<R: Read>(mut r: R) -> Result<PointCloudMap> {
    expect_magic(&mut r, PC_MAGIC)?;
    let n = read_u64(&mut r)? as usize;
    let vals = read_f32s(&mut r, n.checked_mul(4).ok_or_else(|| Error::Data("count overflow".into()))?)?;
    let points = vals.chunks_exact(4).map(|c| Vector3::new(c[0], c[1], c[2])).collect();
    let albedo = vals.chunks_exact(4).map(|c| c[3]).collect();
    PointCloudMap::new(points, albedo)
}

pub fn write_range<W: Write>(mut w: W, img: &RangeImage) -> Result<()> {
    write_magic(&mut w, RG_MAGIC)?;
    write_u32(&mut w, img.height() as u32)?;
    write_u32(&mut w, img.width() as u32)?;
    write_f32s(&mut w, img.values().iter().copied())
}

pub fn read_range<R: Read>(mut r: R) -> Result<RangeImage> {
    expect_magic(&mut r, RG_MAGIC)?;
    let h = read_u32(&mut r)? as usize;
    let w = read_u32(&mut r)? as usize;
    let vals = read_f32s(&mut r, h * w)?;
    RangeImage::new(h, w, vals)
}

fn png_err(e: impl std::fmt::Display) -> Error {
    Error::Data(format!("png: {e}"))
}

/// Encodes 8-bit RGB or grayscale pixels.
pub fn write_png_bytes<W: Write>(w: W, width: usize, height: usize, rgb: bool, bytes: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(if rgb { png::ColorType::Rgb } else { png::ColorType::Grayscale });
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_png<W: Write>(w: W, img: &EquirectImage) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write_png_bytes(w, img.width(), img.height(), true, &bytes)
}

/// Decodes an 8-bit RGB PNG.
pub fn read_png(bytes: &[u8]) -> Result<EquirectImage> {
    let dec = png::Decoder::new(Cursor::new(bytes));
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| png_err("image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return data_err("expected an 8-bit RGB PNG");
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..w * h * 3].iter().map(|&b| b as f64 / 255.0).collect();
    EquirectImage::new(h, w, data)
}

/// One line per pose: `timestamp tx ty tz qx qy qz qw`.
pub fn write_tum<W: Write>(mut w: W, poses: &[Pose]) -> Result<()> {
    for p in poses {
        let q = p.orientation.quaternion();
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            p.timestamp, p.position.x, p.position.y, p.position.z, q.i, q.j, q.k, q.w
        )?;
    }
    Ok(())
}

pub fn read_tum_poses<R: BufRead>(r: R) -> Result<Vec<Pose>> {
    let mut poses = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = t
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("line {}: {e}", ln + 1)))?;
        if v.len() != 8 {
            return data_err(format!("line {}: expected 8 fields, found {}", ln + 1, v.len()));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        poses.push(Pose::new(Vector3::new(v[1], v[2], v[3]), q, v[0])?);
    }
    Ok(poses)
}

pub fn read_tum<R: BufRead>(r: R) -> Result<Trajectory> {
    Trajectory::new(read_tum_poses(r)?)
}
