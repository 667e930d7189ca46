//! Binary checkpoint format.
//!
//! ```text
//! "VITDD1\0"
//! u32 LE length, UTF-8 config record (key=value lines)
//! repeated, in lexicographic name order:
//!     u32 LE name length, UTF-8 name
//!     u32 LE rank, rank × u64 LE dims
//!     numel × f64 LE
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::config::ModelConfig;
use super::params::Params;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 7] = b"VITDD1\0";

pub fn encode(params: &Params) -> Vec<u8> {
    let mut out = Vec::with_capacity(MAGIC.len() + params.num_scalars() * 8 + 4096);
    out.extend_from_slice(MAGIC);
    let record = params.config().to_record();
    out.extend_from_slice(&(record.len() as u32).to_le_bytes());
    out.extend_from_slice(record.as_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
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

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                message: format!("truncated checkpoint while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let offset = self.pos;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
            offset,
            message: format!("{what} is not UTF-8"),
        })
    }
}

pub fn decode(bytes: &[u8]) -> Result<Params> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not a checkpoint (bad magic)".into(),
        });
    }
    let config = ModelConfig::from_record(&r.string("config record")?)?;
    let mut tensors = BTreeMap::new();
    let mut previous: Option<String> = None;
    while r.pos < bytes.len() {
        let offset = r.pos;
        let name = r.string("parameter name")?;
        if previous.as_ref().is_some_and(|p| p >= &name) {
            return Err(Error::Format {
                offset,
                message: format!("parameter {name} out of lexicographic order"),
            });
        }
        let rank = r.u32("rank")? as usize;
        let shape = (0..rank)
            .map(|_| r.u64("dimension").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| Error::Format {
            offset,
            message: format!("shape {shape:?} overflows"),
        })?;
        let raw = r.take(numel.checked_mul(8).unwrap_or(usize::MAX), "parameter data")?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let tensor = Tensor::new(shape, data).map_err(|e| Error::Format {
            offset,
            message: e.to_string(),
        })?;
        previous = Some(name.clone());
        tensors.insert(name, tensor);
    }
    Params::from_tensors(&config, tensors)
}

pub fn save(params: &Params, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Params> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
