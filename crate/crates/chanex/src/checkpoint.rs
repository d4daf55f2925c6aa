//! `CHPT` parameter checkpoints, version 1.
//!
//! Little-endian: `"CHPT" | version u32 | init_seed u64 | count u32`, then per
//! tensor `name_len u32 | name (UTF-8) | rank u32 | dims u32… | values f64…`.
//! Values keep full precision so a reloaded store evaluates bit-identically.

use std::path::Path;

use chanex_core::nn::{ParamStore, Tensor};

use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: [u8; 4] = *b"CHPT";
pub const VERSION: u32 = 1;

pub fn encode(params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&params.init_seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::format("checkpoint", format!("truncated at byte {}", self.at)));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic, expected CHPT"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    let init_seed = r.u64()?;
    let count = r.u32()?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let Some(n) = n.filter(|&n| n <= bytes.len() / 8) else {
            return Err(Error::format("checkpoint", format!("tensor {name} is larger than the file")));
        };
        let data = (0..n).map(|_| r.u64().map(f64::from_bits)).collect::<Result<Vec<_>>>()?;
        entries.push((name, Tensor::new(shape, data)?));
    }
    if r.at != bytes.len() {
        return Err(Error::format("checkpoint", format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(ParamStore::from_named(init_seed, entries)?)
}

pub fn write(path: &Path, params: &ParamStore) -> Result<()> {
    fsutil::write_atomic(path, &encode(params))
}

pub fn read(path: &Path) -> Result<ParamStore> {
    decode(&fsutil::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chanex_core::nn::{LayerSpec, NetworkSpec};

    #[test]
    fn round_trip_is_exact() {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 4), LayerSpec::Relu, LayerSpec::dense(4, 2)]);
        let p = ParamStore::init(&spec, 11).unwrap();
        let back = decode(&encode(&p)).unwrap();
        assert_eq!(back.names(), p.names());
        assert_eq!(back.tensors(), p.tensors());
        assert_eq!(back.init_seed, 11);
        assert!(back.matches(&spec));
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, 2)]);
        let b = encode(&ParamStore::init(&spec, 1).unwrap());
        assert!(decode(&b[..b.len() - 3]).is_err());
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        assert!(decode(b"CHGR\x01\0\0\0").is_err());
    }
}
