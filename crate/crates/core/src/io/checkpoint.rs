//! Checkpoint codec.
//!
//! Layout: `UVDN`, `u32` version, `u32` header length, a JSON header holding
//! the architecture, the ordered tensor table and the training report, then
//! every tensor as little-endian f32 in table order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::{Arch, ModelParams};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"UVDN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: Arch,
    tensors: Vec<TensorEntry>,
    report: serde_json::Value,
}

/// Parameters plus whatever report was stored alongside them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub report: serde_json::Value,
}

pub fn encode(params: &ModelParams<f32>, report: &impl Serialize) -> Result<Vec<u8>> {
    let report = serde_json::to_value(report).map_err(|e| Error::invalid(e.to_string()))?;
    let tensors = params
        .specs()
        .iter()
        .map(|s| TensorEntry {
            name: s.name.clone(),
            shape: s.weight_shape().dims(),
        })
        .collect();
    let header = Header {
        arch: params.arch.clone(),
        tensors,
        report,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + 4 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for w in params.weights() {
        for v in w.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |d: String| Error::format(path, d);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(bad(format!(
            "checkpoint version {version}, expected {VERSION}"
        )));
    }
    let hlen = word(8) as usize;
    let hend = 12usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[12..hend]).map_err(|e| bad(format!("header: {e}")))?;
    header.arch.validate().map_err(|e| bad(e.to_string()))?;

    let specs = header.arch.layers();
    if specs.len() != header.tensors.len() {
        return Err(bad(format!(
            "architecture has {} tensors, table lists {}",
            specs.len(),
            header.tensors.len()
        )));
    }
    for (s, t) in specs.iter().zip(&header.tensors) {
        if s.name != t.name || s.weight_shape().dims() != t.shape {
            return Err(bad(format!(
                "tensor {} {:?} conflicts with architecture ({} {:?})",
                t.name,
                t.shape,
                s.name,
                s.weight_shape().dims()
            )));
        }
    }

    let payload = &bytes[hend..];
    let need: usize = specs.iter().map(|s| s.weight_shape().numel() * 4).sum();
    if payload.len() != need {
        return Err(bad(format!(
            "payload is {} bytes, tensor table needs {need}",
            payload.len()
        )));
    }
    let mut off = 0;
    let mut weights = Vec::with_capacity(specs.len());
    for s in &specs {
        let shape: Shape = s.weight_shape();
        let n = shape.numel() * 4;
        let data = payload[off..off + n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        weights.push(Tensor::from_vec(shape, data).map_err(|e| bad(format!("{}: {e}", s.name)))?);
        off += n;
    }
    let params = ModelParams::from_weights(&header.arch, weights)?;
    Ok(Checkpoint {
        params,
        report: header.report,
    })
}

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    report: &impl Serialize,
    path: &Path,
) -> Result<()> {
    write_atomic(path, &encode(params, report)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
