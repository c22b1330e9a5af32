//! Parameter checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "BRW1"
//! repeated until end of file, in `PARAM_NAMES` order:
//!   name_len, name bytes (UTF-8), ndim, dims[ndim], f32 payload (LE, row-major)
//! ```
//!
//! Models without adaptive mask modulation simply stop after `out.bias`.

use std::path::Path;

use super::ModelParams;
use crate::data::io::{put_u32, Reader};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BRW1";

pub fn encode_checkpoint(p: &ModelParams<f32>) -> Vec<u8> {
    let mut buf = CHECKPOINT_MAGIC.to_vec();
    for (name, t) in p.tensors() {
        put_u32(&mut buf, name.len());
        buf.extend_from_slice(name.as_bytes());
        put_u32(&mut buf, t.dims().len());
        for &d in t.dims() {
            put_u32(&mut buf, d);
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let mut named = Vec::new();
    while !r.is_empty() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let t = r.tensor_body()?;
        named.push((name, t));
    }
    ModelParams::from_named(named)
}

pub fn write_checkpoint(path: impl AsRef<Path>, p: &ModelParams<f32>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(p))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    decode_checkpoint(&std::fs::read(path)?)
}

