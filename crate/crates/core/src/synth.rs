//! Synthetic clean video: a band-limited random texture drifting at a
//! constant sub-pixel velocity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::{pnm, FrameSequence};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TextureSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Pixels per frame, `(dy, dx)`.
    pub velocity: (f64, f64),
    /// Sinusoidal components summed per channel.
    pub components: usize,
    pub seed: u64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            frames: 60,
            height: 64,
            width: 64,
            channels: 1,
            velocity: (0.5, 1.0),
            components: 12,
            seed: 0,
        }
    }
}

struct Wave {
    ky: f64,
    kx: f64,
    phase: f64,
    amp: f64,
}

/// Renders the sequence, quantized to 8-bit levels so it behaves like data
/// decoded from 8-bit files.
pub fn translating_texture(spec: &TextureSpec) -> Result<FrameSequence> {
    if spec.frames == 0 || spec.height == 0 || spec.width == 0 || spec.channels == 0 {
        return Err(Error::invalid("texture dimensions must be positive"));
    }
    if spec.components == 0 {
        return Err(Error::invalid("texture needs at least one component"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let waves: Vec<Vec<Wave>> = (0..spec.channels)
        .map(|_| {
            (0..spec.components)
                .map(|_| {
                    // periods between ~5 and ~32 pixels
                    let freq = rng.random_range(0.03..0.2) * std::f64::consts::TAU;
                    let theta = rng.random_range(0.0..std::f64::consts::PI);
                    Wave {
                        ky: freq * theta.sin(),
                        kx: freq * theta.cos(),
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                        amp: rng.random_range(0.5..1.0),
                    }
                })
                .collect()
        })
        .collect();
    let norm: Vec<f64> = waves
        .iter()
        .map(|ws| ws.iter().map(|w| w.amp).sum::<f64>())
        .collect();

    let (h, w) = (spec.height, spec.width);
    let shape = Shape::new(1, spec.channels, h, w);
    let frames = (0..spec.frames)
        .map(|t| {
            let (oy, ox) = (spec.velocity.0 * t as f64, spec.velocity.1 * t as f64);
            let mut data = Vec::with_capacity(shape.numel());
            for (ws, n) in waves.iter().zip(&norm) {
                for y in 0..h {
                    for x in 0..w {
                        let (py, px) = (y as f64 - oy, x as f64 - ox);
                        let v: f64 = ws
                            .iter()
                            .map(|wv| wv.amp * (wv.ky * py + wv.kx * px + wv.phase).sin())
                            .sum();
                        // roughly +-3 sd of the sum mapped into [0.1, 0.9]
                        let u = (0.5 + 0.4 * v / (0.5 * n)).clamp(0.0, 1.0);
                        data.push(pnm::dequantize(pnm::quantize(u as f32)));
                    }
                }
            }
            Tensor::from_vec(shape, data)
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(frames, 8)
}
