//! Tensor files and dataset directories.
//!
//! Tensor file layout: `"BRT1"`, `u32 ndim`, `u32 dims[ndim]`, then `f32`
//! values, everything little-endian and row-major.
//!
//! A dataset directory holds `NNNN_src.brt`, `NNNN_tgt.brt`, `NNNN_mask.brt`
//! per triplet and a `manifest.txt` listing one index per line.

use std::path::{Path, PathBuf};

use super::RemovalTriplet;
use crate::tensor::checked_len;
use crate::{Error, Result, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"BRT1";
pub const MANIFEST: &str = "manifest.txt";

pub(crate) fn put_u32(buf: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("value fits in u32");
    buf.extend_from_slice(&v.to_le_bytes());
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated: wanted {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// `ndim`, `dims`, payload.
    pub fn tensor_body(&mut self) -> Result<Tensor<f32>> {
        let ndim = self.u32()? as usize;
        if ndim == 0 {
            return Err(Error::Format("tensor has no dimensions".into()));
        }
        let dims = (0..ndim)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = checked_len(&dims).map_err(|e| Error::Format(e.to_string()))?;
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))?;
        let payload = self.take(bytes)?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(dims, data)
    }
}

pub fn encode_tensor(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = TENSOR_MAGIC.to_vec();
    put_u32(&mut buf, t.dims().len());
    for &d in t.dims() {
        put_u32(&mut buf, d);
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != TENSOR_MAGIC {
        return Err(Error::Format("bad tensor magic".into()));
    }
    let t = r.tensor_body()?;
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after tensor payload".into()));
    }
    Ok(t)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    std::fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    decode_tensor(&std::fs::read(path)?)
}

pub fn triplet_paths(dir: &Path, index: u64) -> [PathBuf; 3] {
    ["src", "tgt", "mask"].map(|k| dir.join(format!("{index:04}_{k}.brt")))
}

pub fn output_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("{index:04}_out.brt"))
}

pub fn write_triplet(dir: impl AsRef<Path>, index: u64, tr: &RemovalTriplet<f32>) -> Result<()> {
    let [s, t, m] = triplet_paths(dir.as_ref(), index);
    write_tensor(s, &tr.source)?;
    write_tensor(t, &tr.target)?;
    write_tensor(m, &tr.mask)
}

pub fn read_triplet(dir: impl AsRef<Path>, index: u64) -> Result<RemovalTriplet<f32>> {
    let [s, t, m] = triplet_paths(dir.as_ref(), index);
    let tr = RemovalTriplet {
        source: read_tensor(s)?,
        target: read_tensor(t)?,
        mask: read_tensor(m)?,
    };
    tr.source.ensure_same_shape(&tr.target)?;
    tr.source.ensure_same_shape(&tr.mask)?;
    Ok(tr)
}

pub fn write_manifest(dir: impl AsRef<Path>, indices: &[u64]) -> Result<()> {
    let body: String = indices.iter().map(|i| format!("{i}\n")).collect();
    std::fs::write(dir.as_ref().join(MANIFEST), body)?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(dir.as_ref().join(MANIFEST))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse()
                .map_err(|_| Error::Format(format!("bad manifest line {l:?}")))
        })
        .collect()
}
