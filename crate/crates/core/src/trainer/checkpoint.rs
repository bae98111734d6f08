//! Binary checkpoints.
//!
//! Layout, little-endian: magic `CSSCKPT\0`, `u32` version, SHA-256 of the
//! config JSON, `u64` config length and the config JSON itself, `u64` tensor
//! count, then per tensor in registry order: `u32` name length, name bytes,
//! `u32` rank, `u64` per extent, and the values as `f64`.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::model::CssModel;
use crate::error::{Error, Result};
use crate::numeric::ParamStore;

const MAGIC: &[u8; 8] = b"CSSCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn config_digest(config: &TrainConfig) -> Result<[u8; 32]> {
    let json = serde_json::to_string(config)?;
    Ok(Sha256::digest(json.as_bytes()).into())
}

pub fn encode_checkpoint(config: &TrainConfig, store: &ParamStore) -> Result<Vec<u8>> {
    let json = serde_json::to_string(config)?;
    let mut out = Vec::with_capacity(64 + json.len() + store.num_scalars() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_digest(config)?);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for e in store.entries() {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        let shape = e.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &s in shape {
            out.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

/// Rebuilds the model described by the stored config and loads its values.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TrainConfig, CssModel, ParamStore)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let n = r.len()?;
    let json = r.take(n)?;
    let config: TrainConfig =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    if Sha256::digest(json).as_slice() != digest {
        return Err(Error::Checkpoint("config digest mismatch".into()));
    }
    let mut store = ParamStore::new();
    let model = CssModel::build(&config, &mut store)?;
    let count = r.len()?;
    if count != store.len() {
        return Err(Error::Checkpoint(format!("{count} tensors stored, model has {}", store.len())));
    }
    for id in store.ids().collect::<Vec<_>>() {
        let n = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        if name != store.name(id) {
            return Err(Error::Checkpoint(format!("expected tensor `{}`, found `{name}`", store.name(id))));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.len()?);
        }
        if shape != store.value(id).shape() {
            return Err(Error::Checkpoint(format!("shape mismatch for `{name}`")));
        }
        let data = store.value_mut(id).data_mut();
        for v in data.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            if !v.is_finite() {
                return Err(Error::Checkpoint(format!("non-finite value in `{name}`")));
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((config, model, store))
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &TrainConfig, store: &ParamStore) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(config, store)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(TrainConfig, CssModel, ParamStore)> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
