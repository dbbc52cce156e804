//! Synthetic corruption with keyed, order-independent randomness.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Encoding, FrameSequence};
use crate::rng::KeyedRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Poisson,
    Impulse,
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Poisson => "poisson",
            NoiseFamily::Impulse => "impulse",
        })
    }
}

/// A noise family, its level and the seed that fixes every draw.
///
/// `level` is σ in 8-bit units for Gaussian noise, the peak event count λ
/// for Poisson noise and the replaced-pixel ratio α for impulse noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily, level: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            family,
            level,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.level.is_finite()
            && match self.family {
                NoiseFamily::Gaussian | NoiseFamily::Poisson => self.level > 0.0,
                NoiseFamily::Impulse => self.level > 0.0 && self.level < 1.0,
            };
        if ok {
            Ok(())
        } else {
            let range = match self.family {
                NoiseFamily::Impulse => "in (0, 1)",
                _ => "> 0",
            };
            Err(Error::invalid(format!(
                "{} level must be {range}, got {}",
                self.family, self.level
            )))
        }
    }

    /// Corrupts frame `t` of a sequence. The result depends only on the
    /// frame contents, the spec and `t`.
    pub fn apply(&self, frame: &Tensor<f32>, t: u64) -> Result<Tensor<f32>> {
        match self.family {
            NoiseFamily::Gaussian => add_gaussian(frame, self.level, self.seed, t),
            NoiseFamily::Poisson => add_poisson(frame, self.level, self.seed, t),
            NoiseFamily::Impulse => add_impulse(frame, self.level, self.seed, t),
        }
    }
}

/// `x + n` with `n ~ N(0, (sigma/255)^2)` per element. Not clipped.
pub fn add_gaussian(
    frame: &Tensor<f32>,
    sigma_8bit: f64,
    seed: u64,
    t: u64,
) -> Result<Tensor<f32>> {
    NoiseSpec::new(NoiseFamily::Gaussian, sigma_8bit, seed)?;
    let sd = sigma_8bit / 255.0;
    let data = frame
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let z: f64 = StandardNormal.sample(&mut KeyedRng::new(seed, t, i as u64));
            (x as f64 + sd * z) as f32
        })
        .collect();
    Tensor::from_vec(frame.shape(), data)
}

/// `Poisson(lambda * x) / lambda` per element.
pub fn add_poisson(frame: &Tensor<f32>, lambda: f64, seed: u64, t: u64) -> Result<Tensor<f32>> {
    NoiseSpec::new(NoiseFamily::Poisson, lambda, seed)?;
    let data = frame
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x < 0.0 {
                return Err(Error::invalid(format!(
                    "poisson noise needs non-negative pixels, element {i} is {x}"
                )));
            }
            let rate = lambda * x as f64;
            if rate == 0.0 {
                return Ok(0.0);
            }
            let dist = Poisson::new(rate).map_err(|e| Error::invalid(e.to_string()))?;
            let k: f64 = dist.sample(&mut KeyedRng::new(seed, t, i as u64));
            Ok((k / lambda) as f32)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_vec(frame.shape(), data)
}

/// Replaces each pixel with probability `alpha` by black or white; all
/// channels of a pixel move together.
pub fn add_impulse(frame: &Tensor<f32>, alpha: f64, seed: u64, t: u64) -> Result<Tensor<f32>> {
    NoiseSpec::new(NoiseFamily::Impulse, alpha, seed)?;
    let s = frame.shape();
    let plane = s.h * s.w;
    let mut out = frame.clone();
    let data = out.data_mut();
    for n in 0..s.n {
        for p in 0..plane {
            let mut rng = KeyedRng::new(seed, t, (n * plane + p) as u64);
            if rng.unit() < alpha {
                let v = if rng.random::<bool>() { 1.0 } else { 0.0 };
                for c in 0..s.c {
                    data[(n * s.c + c) * plane + p] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Corrupts every frame of `clean`.
pub fn corrupt(clean: &FrameSequence, spec: &NoiseSpec) -> Result<FrameSequence> {
    spec.validate()?;
    let frames = clean
        .frames()
        .par_iter()
        .enumerate()
        .map(|(t, f)| spec.apply(f, t as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSequence::new(frames, clean.bit_depth)?.with_fps(clean.fps))
}

/// Writes the corrupted sequence to `out` as f32raw frames plus a manifest
/// recording `spec`. Returns the manifest path.
pub fn materialize(clean: &FrameSequence, spec: &NoiseSpec, out: &Path) -> Result<PathBuf> {
    let noisy = corrupt(clean, spec)?;
    io::write_sequence(&noisy, out, Encoding::F32Raw, Some(*spec))
}
