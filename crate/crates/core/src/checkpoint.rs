//! `I3DCK1` checkpoints: a format version, a string metadata table and a
//! named table of 32-bit parameter arrays.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::binio::*;
use crate::error::{data_err, Result};
use crate::nn::Param;

const MAGIC: &[u8; 6] = b"I3DCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: Vec<Param>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("kind".to_string(), kind.to_string());
        Checkpoint { meta, params: Vec::new() }
    }

    pub fn kind(&self) -> &str {
        self.meta.get("kind").map(String::as_str).unwrap_or("")
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind() != kind {
            return data_err(format!("expected a {kind} checkpoint, found '{}'", self.kind()));
        }
        Ok(())
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| crate::Error::Data(format!("checkpoint lacks integer '{key}'")))
    }

    pub fn push(&mut self, p: &Param) {
        self.params.push(Param {
            grad: Vec::new(),
            ..p.clone()
        });
    }

    /// Copies stored values into `targets`, matching by name and shape.
    pub fn restore(&self, targets: Vec<&mut Param>) -> Result<()> {
        let by_name: BTreeMap<&str, &Param> = self.params.iter().map(|p| (p.name.as_str(), p)).collect();
        if by_name.len() != targets.len() {
            return data_err(format!("checkpoint has {} arrays, model needs {}", by_name.len(), targets.len()));
        }
        for t in targets {
            let src = by_name
                .get(t.name.as_str())
                .ok_or_else(|| crate::Error::Data(format!("checkpoint lacks '{}'", t.name)))?;
            if src.shape != t.shape {
                return data_err(format!("shape mismatch for '{}': {:?} vs {:?}", t.name, src.shape, t.shape));
            }
            t.value.copy_from_slice(&src.value);
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write_magic(&mut w, MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        write_u32(&mut w, self.meta.len() as u32)?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        write_u32(&mut w, self.params.len() as u32)?;
        for p in &self.params {
            write_str(&mut w, &p.name)?;
            write_u32(&mut w, p.shape.len() as u32)?;
            for &d in &p.shape {
                write_u32(&mut w, d as u32)?;
            }
            write_f32s(&mut w, p.value.iter().copied())?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, MAGIC)?;
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return data_err(format!("unsupported checkpoint version {version}"));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..read_u32(&mut r)? {
            let k = read_str(&mut r)?;
            let v = read_str(&mut r)?;
            meta.insert(k, v);
        }
        let n = read_u32(&mut r)?;
        let mut params = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            if ndim > 8 {
                return data_err("too many dimensions");
            }
            let shape = (0..ndim).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let value = read_f32s(&mut r, shape.iter().product())?;
            params.push(Param {
                name,
                shape,
                value,
                grad: Vec::new(),
            });
        }
        Ok(Checkpoint { meta, params })
    }

    /// Order-sensitive FNV-1a digest of all parameter bits.
    pub fn checksum(params: &[&Param]) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in params {
            for v in &p.value {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}
