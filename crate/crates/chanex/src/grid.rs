//! `CHGR` binary channel grids, version 1.
//!
//! Little-endian header `"CHGR" | version u32 | antennas u32 | subcarriers u32`,
//! then `antennas · subcarriers` row-major `(re, im)` pairs of `f32`.

use std::path::Path;

use chanex_core::channel::CMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: [u8; 4] = *b"CHGR";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Serializes `m`; entries are narrowed to `f32`.
pub fn encode(m: &CMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<CMatrix> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format("channel grid", format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format("channel grid", "bad magic, expected CHGR"));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::format("channel grid", format!("unsupported version {version}")));
    }
    let (rows, cols) = (u32_at(bytes, 8) as usize, u32_at(bytes, 12) as usize);
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format("channel grid", "dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(Error::format("channel grid", format!("{rows}x{cols} grid needs {expected} bytes, got {}", bytes.len())));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes(c[..4].try_into().expect("four bytes"));
            let im = f32::from_le_bytes(c[4..].try_into().expect("four bytes"));
            Complex64::new(f64::from(re), f64::from(im))
        })
        .collect();
    Ok(CMatrix::from_vec(rows, cols, data)?)
}

pub fn write(path: &Path, m: &CMatrix) -> Result<()> {
    fsutil::write_atomic(path, &encode(m))
}

pub fn read(path: &Path) -> Result<CMatrix> {
    decode(&fsutil::read(path)?)
}
