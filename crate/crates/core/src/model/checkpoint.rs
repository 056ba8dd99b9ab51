//! Flat binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "SIMTCKPT"
//! version    u32      currently 1
//! dtype      u8       4 = f32, 8 = f64
//! meta_len   u64
//! meta       meta_len bytes of UTF-8 JSON (model config, vocabularies, run metadata)
//! n_params   u32
//! n_params times:
//!   name_len u32, name bytes
//!   ndim     u32, ndim x u64 dims
//!   values   product(dims) IEEE-754 values of the declared dtype
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use super::tensor::Tensor;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"SIMTCKPT";
pub const VERSION: u32 = 1;

/// Everything stored in the JSON block of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    /// Number of optimizer updates applied.
    pub updates: u64,
    pub seed: u64,
    pub fingerprint: String,
}

/// A loaded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    pub params: ModelParams<T>,
}

pub fn encode<T: Real>(meta: &CheckpointMeta, params: &ModelParams<T>) -> Result<Vec<u8>> {
    if meta.model != params.config {
        return Err(Error::Checkpoint(
            "metadata model config differs from the parameters".into(),
        ));
    }
    let json = serde_json::to_vec(meta)?;
    let mut out =
        Vec::with_capacity(params.num_scalars() * std::mem::size_of::<T>() + json.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE_TAG);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let names = params.names();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    params.visit(&mut |name, t| {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    });
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

fn read_values<T: Real, S: Real>(r: &mut Reader<'_>, n: usize) -> Result<Vec<T>> {
    let width = std::mem::size_of::<S>();
    let bytes = r.take(
        n.checked_mul(width)
            .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
    )?;
    Ok(bytes
        .chunks_exact(width)
        .map(|c| T::from_f64c(S::read_le(c).to_f64().unwrap_or(f64::NAN)))
        .collect())
}

/// Decodes a checkpoint, converting stored values to `T`.
pub fn decode<T: Real>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(
            "not a checkpoint (bad magic bytes)".into(),
        ));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dtype = r.take(1)?[0];
    if dtype != 4 && dtype != 8 {
        return Err(Error::Checkpoint(format!("unknown dtype tag {dtype}")));
    }
    let meta_len = r.u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    meta.model
        .validate()
        .map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;
    let mut params = ModelParams::<T>::zeros(&meta.model);
    let expected = params.names();
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} parameter blocks, expected {}",
            expected.len()
        )));
    }
    let mut blocks: Vec<Tensor<T>> = Vec::with_capacity(count);
    for want in &expected {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        if name != want {
            return Err(Error::Checkpoint(format!(
                "found block {name:?}, expected {want:?}"
            )));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = if dtype == 4 {
            read_values::<T, f32>(&mut r, n)?
        } else {
            read_values::<T, f64>(&mut r, n)?
        };
        blocks.push(Tensor::from_vec(&shape, data));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let mut it = blocks.into_iter();
    let mut mismatch = None;
    params.visit_mut(&mut |name, t| {
        let b = it.next().expect("count checked");
        if b.shape() != t.shape() && mismatch.is_none() {
            mismatch = Some(format!(
                "{name}: shape {:?}, expected {:?}",
                b.shape(),
                t.shape()
            ));
        }
        *t = b;
    });
    if let Some(m) = mismatch {
        return Err(Error::Checkpoint(m));
    }
    Ok(Checkpoint { meta, params })
}

pub fn save<T: Real>(path: &Path, meta: &CheckpointMeta, params: &ModelParams<T>) -> Result<()> {
    let bytes = encode(meta, params)?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // write then rename so an interrupted save never clobbers a good file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// One line per tensor: name, shape and L2 norm.
pub fn summary<T: Real>(params: &ModelParams<T>) -> String {
    let mut out = String::new();
    params.visit(&mut |name, t| {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "{name}\t[{}]\t{:.6}\n",
            dims.join("x"),
            t.l2_norm()
        ));
    });
    out.push_str(&format!("total scalars\t{}\n", params.num_scalars()));
    out
}
