//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Float to byte: clip to `[0, 1]`, scale by 255, round half up.
pub fn quantize(v: f32) -> u8 {
    let x = (v.clamp(0.0, 1.0) as f64) * 255.0;
    (x + 0.5).floor() as u8
}

pub fn dequantize(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Encodes a `(1, C, H, W)` frame, `C` in {1, 3}, as P5 or P6 bytes.
pub fn encode(frame: &Tensor<f32>) -> Result<Vec<u8>> {
    let s = frame.shape();
    let magic = match (s.n, s.c) {
        (1, 1) => "P5",
        (1, 3) => "P6",
        _ => {
            return Err(Error::shape(
                "pnm_encode",
                format!("need a single 1- or 3-channel frame, got {s}"),
            ))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", s.w, s.h).into_bytes();
    let plane = s.h * s.w;
    let data = frame.data();
    out.reserve(plane * s.c);
    for p in 0..plane {
        for c in 0..s.c {
            out.push(quantize(data[c * plane + p]));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Option<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }
}

/// Decodes P5/P6 bytes into a `(1, C, H, W)` frame with values `v / 255`.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Tensor<f32>> {
    let bad = |d: &str| Error::format(path, d);
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad("not a binary PGM/PPM file (expected P5 or P6)")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let w = cur.number().ok_or_else(|| bad("missing width"))?;
    let h = cur.number().ok_or_else(|| bad("missing height"))?;
    let maxval = cur.number().ok_or_else(|| bad("missing maxval"))?;
    if maxval != 255 {
        return Err(bad(&format!("maxval {maxval} unsupported, only 255")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("header not terminated by whitespace"));
    }
    let body = &bytes[cur.pos + 1..];
    let plane = w * h;
    let need = plane * channels;
    if body.len() != need {
        return Err(bad(&format!(
            "expected {need} pixel bytes, found {}",
            body.len()
        )));
    }
    let mut data = vec![0.0f32; need];
    for p in 0..plane {
        for c in 0..channels {
            data[c * plane + p] = dequantize(body[p * channels + c]);
        }
    }
    Tensor::from_vec(Shape::new(1, channels, h, w), data)
}
