//! Little-endian primitives shared by the binary file formats.

use std::io::{Read, Write};

use crate::error::{data_err, Result};

pub fn write_magic<W: Write>(w: &mut W, magic: &[u8; 6]) -> Result<()> {
    w.write_all(magic)?;
    Ok(())
}

pub fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 6]) -> Result<()> {
    let mut buf = [0u8; 6];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return data_err(format!(
            "bad magic: expected {}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        ));
    }
    Ok(())
}

pub fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_f32s<W: Write>(w: &mut W, vals: impl IntoIterator<Item = f64>) -> Result<()> {
    let bytes: Vec<u8> = vals.into_iter().flat_map(|v| (v as f32).to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads `n` 32-bit floats, widened to f64. Rejects counts that cannot fit in memory.
pub fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    if n > (1 << 31) {
        return data_err(format!("implausible element count {n}"));
    }
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Write a named string (u32 length + UTF-8 bytes).
pub fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 16 {
        return data_err("string too long");
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| crate::Error::Data(e.to_string()))
}
