//! Binary checkpoint format (all integers little-endian u32):
//!
//! ```text
//! "MSAF" version count
//! count x { name_len name_bytes dtype rank extents[rank] values }
//! ```
//!
//! `dtype` 0 is f32, stored as little-endian IEEE-754 bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MSAF";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 0;

pub type Entry = (String, Tensor<f32>);

pub fn encode(entries: &[Entry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(&mut out, VERSION);
    put(&mut out, entries.len() as u32);
    for (name, t) in entries {
        put(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put(&mut out, DTYPE_F32);
        put(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail(&self, detail: impl Into<String>) -> Error {
        Error::Checkpoint { offset: self.pos, detail: detail.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Entry>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        r.pos = 0;
        return Err(r.fail("bad magic, expected \"MSAF\""));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        r.pos -= 4;
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32("entry count")?;
    let mut entries = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let start = r.pos;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint { offset: start, detail: "name is not UTF-8".into() })?
            .to_string();
        let dtype = r.u32("dtype")?;
        if dtype != DTYPE_F32 {
            r.pos -= 4;
            return Err(r.fail(format!("entry {name}: unsupported dtype code {dtype}")));
        }
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u32("extent")?;
            if d == 0 {
                r.pos -= 4;
                return Err(r.fail(format!("entry {name}: zero extent")));
            }
            shape.push(d as usize);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.fail("shape overflow"))?;
        let nbytes = numel.checked_mul(4).ok_or_else(|| r.fail("shape overflow"))?;
        let raw = r.take(nbytes, "values")?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
        entries.push((name, Tensor::from_vec(shape, data)?));
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes after last entry"));
    }
    Ok(entries)
}

pub fn save(path: &Path, entries: &[Entry]) -> Result<()> {
    std::fs::write(path, encode(entries)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<Entry>> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
