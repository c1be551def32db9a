//! Checkpoint container: `MBCK`, u32 version, u32-length JSON metadata, u32
//! tensor count, then per tensor: u32-length UTF-8 name, u8 trainable flag,
//! u32 rank, u32 dims, f32 data. All integers and floats little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::families::build_model;
use super::graph::{Family, NetworkDescription, Preset};
use super::params::ParameterSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::DecisionTreeSchema;

const MAGIC: &[u8; 4] = b"MBCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub family: Family,
    pub preset: Preset,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Held-out split used during training, so evaluation can reuse it.
    pub test_fraction: f64,
    pub split_seed: u64,
}

pub fn write_checkpoint<T: Scalar>(path: &Path, meta: &CheckpointMeta, params: &ParameterSet<T>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.push(t.trainable as u8);
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, ParameterSet<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Checkpoint("missing MBCK magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = cur.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(cur.take(meta_len)?)?;
    let count = cur.u32()? as usize;
    let mut params = ParameterSet::default();
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let trainable = cur.take(1)?[0] != 0;
        let rank = cur.u32()? as usize;
        let shape = (0..rank)
            .map(|_| cur.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let data = cur
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(name, shape, data, trainable);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok((meta, params))
}

/// Rebuild the network described by a checkpoint and check its tensors fit.
pub fn load_model(
    path: &Path,
    schema: &DecisionTreeSchema,
) -> Result<(CheckpointMeta, NetworkDescription, ParameterSet<f32>)> {
    let (meta, params) = read_checkpoint(path)?;
    let (net, fresh) = build_model::<f32>(meta.family, meta.preset, schema, meta.dropout_rate, meta.seed)?;
    fresh.check_aligned(&params)?;
    for (a, b) in fresh.tensors.iter().zip(&params.tensors) {
        if a.name != b.name || a.trainable != b.trainable {
            return Err(Error::Checkpoint(format!(
                "tensor {} does not match network tensor {}",
                b.name, a.name
            )));
        }
    }
    Ok((meta, net, params))
}
