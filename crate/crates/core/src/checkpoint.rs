//! `RADPT1` parameter checkpoints.
//!
//! Layout: the 6-byte magic, then one record per parameter in name order
//! (`u32` name length, UTF-8 name, `u32` rank, `rank` x `u32` dims,
//! `f32` payload), then a `u64` FNV-1a checksum of every byte between the
//! magic and the checksum. All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, SizeClass, VsrModel};
use crate::nn::{ParamStore, Tensor};

pub const MAGIC: &[u8; 6] = b"RADPT1";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, entry) in store.iter() {
        body.extend_from_slice(&(name.len() as u32).to_le_bytes());
        body.extend_from_slice(name.as_bytes());
        let shape = entry.value.shape();
        body.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for d in shape {
            body.extend_from_slice(&(d as u32).to_le_bytes());
        }
        body.extend(entry.value.le_bytes());
    }
    let mut out = Vec::with_capacity(MAGIC.len() + body.len() + 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&body);
    out.extend_from_slice(&fnv1a64(&body).to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CorruptCheckpoint(format!("record truncated at byte {}", MAGIC.len() + self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore> {
    let corrupt = |m: String| Error::CorruptCheckpoint(m);
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing RADPT1 header".into()));
    }
    let body = &bytes[MAGIC.len()..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
    if fnv1a64(body) != stored {
        return Err(corrupt("payload checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    let mut store = ParamStore::new();
    while r.pos < body.len() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| corrupt("parameter name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32()? as usize;
        if rank != 4 {
            return Err(corrupt(format!("parameter `{name}` has rank {rank}, expected 4")));
        }
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = r.u32()? as usize;
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n.checked_mul(4).ok_or_else(|| corrupt("dims overflow".into()))?)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| corrupt(format!("parameter `{name}`: {e}")))?;
        if store.get(&name).is_some() {
            return Err(corrupt(format!("duplicate parameter `{name}`")));
        }
        store.insert(name, t);
    }
    Ok(store)
}

pub fn save_params(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(store))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamStore> {
    decode(&std::fs::read(path)?)
}

/// Load a checkpoint and check it against an expected architecture.
pub fn load_model(path: impl AsRef<Path>, config: ModelConfig) -> Result<VsrModel> {
    VsrModel::from_params(config, load_params(path)?)
}

/// Load a checkpoint, inferring the architecture from its shapes.
pub fn load_model_inferred(path: impl AsRef<Path>, size_class: SizeClass) -> Result<VsrModel> {
    let params = load_params(path)?;
    let config = ModelConfig::infer(&params, size_class)?;
    VsrModel::from_params(config, params)
}
