//! Exact float frames: `FR32`, then `u32` C, H, W and `C*H*W` f32 values,
//! all little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"FR32";
const HEADER: usize = 16;

pub fn encode(frame: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = frame.shape();
    if s.n != 1 {
        return Err(Error::shape(
            "f32raw_encode",
            format!("need a single frame, got {s}"),
        ));
    }
    let mut out = Vec::with_capacity(HEADER + 4 * frame.numel());
    out.extend_from_slice(MAGIC);
    for d in [s.c, s.h, s.w] {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} too large")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in frame.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::format(path, "missing FR32 header"));
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (c, h, w) = (dim(0), dim(1), dim(2));
    let need = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(path, "declared geometry overflows"))?;
    let body = &bytes[HEADER..];
    if body.len() != need {
        return Err(Error::format(
            path,
            format!(
                "{c}x{h}x{w} needs {need} payload bytes, found {}",
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::from_vec(Shape::new(1, c, h, w), data).map_err(|e| Error::format(path, e.to_string()))
}
