//! `CGSF` binary snapshots.
//!
//! Layout (little-endian): magic `CGSF`, version `u16`, `nx u32`, `ny u32`,
//! `lx f64`, `ly f64`, field count `u16`, then for each field a 16-byte
//! NUL-padded name followed by `nx * ny` `f64` values in row-major order.

use std::io::{Read, Write};

use super::{PeriodicGrid2D, ScalarField};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"CGSF";
pub const SNAPSHOT_VERSION: u16 = 1;
const NAME_LEN: usize = 16;

/// Named fields sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    pub grid: PeriodicGrid2D,
    pub fields: Vec<(String, ScalarField)>,
}

impl FieldSet {
    pub fn new(grid: PeriodicGrid2D) -> Self {
        Self {
            grid,
            fields: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, field: ScalarField) -> Result<()> {
        if name.len() > NAME_LEN || name.contains('\0') || name.is_empty() {
            return Err(Error::Format(format!(
                "field name {name:?} must be 1..=16 bytes without NUL"
            )));
        }
        if !field.grid().same_shape(&self.grid) {
            return Err(Error::Format(format!(
                "field {name:?} is on a different grid"
            )));
        }
        self.fields.push((name.to_string(), field));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ScalarField> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, f)| f)
    }
}

pub fn write_fields<W: Write>(set: &FieldSet, mut w: W) -> Result<()> {
    let g = &set.grid;
    let count =
        u16::try_from(set.fields.len()).map_err(|_| Error::Format("too many fields".into()))?;
    let mut buf = Vec::with_capacity(36 + set.fields.len() * (NAME_LEN + 8 * g.len()));
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.nx as u32).to_le_bytes());
    buf.extend_from_slice(&(g.ny as u32).to_le_bytes());
    buf.extend_from_slice(&g.lx.to_le_bytes());
    buf.extend_from_slice(&g.ly.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for (name, field) in &set.fields {
        let mut padded = [0u8; NAME_LEN];
        padded[..name.len()].copy_from_slice(name.as_bytes());
        buf.extend_from_slice(&padded);
        for v in field.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated file: wanted {n} bytes at offset {}",
                    self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_fields<R: Read>(mut r: R) -> Result<FieldSet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4)? != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad magic, not a CGSF snapshot".into()));
    }
    let version = c.u16()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: SNAPSHOT_VERSION,
        });
    }
    let nx = c.u32()? as usize;
    let ny = c.u32()? as usize;
    let lx = c.f64()?;
    let ly = c.f64()?;
    let grid = PeriodicGrid2D::new(nx, ny, lx, ly).map_err(|e| Error::Format(e.to_string()))?;
    let count = c.u16()?;
    let mut set = FieldSet::new(grid);
    for _ in 0..count {
        let raw = c.take(NAME_LEN)?;
        let end = raw.iter().position(|&b| b == 0).unwrap_or(NAME_LEN);
        let name = std::str::from_utf8(&raw[..end])
            .map_err(|_| Error::Format("field name is not UTF-8".into()))?
            .to_string();
        let payload = c.take(8 * grid.len())?;
        let values = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        set.push(&name, ScalarField::from_vec(grid, values)?)?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - c.pos
        )));
    }
    Ok(set)
}
