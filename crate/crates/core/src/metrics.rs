//! PSNR and single-scale SSIM.
//!
//! Both functions read samples in the units of `peak`: pass raw 8-bit
//! values with `peak = 255`, or normalized floats with `peak = 1`.
//! [`evaluate_sequence`] rescales normalized frames itself.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FrameSequence;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(op: &'static str, a: &Tensor<f32>, b: &Tensor<f32>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

fn mse_scaled(a: &[f32], b: &[f32], scale: f64) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) * scale;
            d * d
        })
        .sum();
    sum / a.len() as f64
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10 log10(peak^2 / MSE)`; identical inputs give `f64::INFINITY`.
pub fn psnr(reference: &Tensor<f32>, test: &Tensor<f32>, peak: f64) -> Result<f64> {
    check_pair("psnr", reference, test)?;
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    Ok(psnr_from_mse(
        mse_scaled(reference.data(), test.data(), 1.0),
        peak,
    ))
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut g = [0.0; SSIM_WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Valid-region separable filtering of an `h x w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&line[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * rows[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

fn ssim_plane(a: &[f32], b: &[f32], h: usize, w: usize, scale: f64, peak: f64) -> f64 {
    let taps = gaussian_taps();
    let x: Vec<f64> = a.iter().map(|&v| v as f64 * scale).collect();
    let y: Vec<f64> = b.iter().map(|&v| v as f64 * scale).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, h, w, &taps);
    let my = filter_valid(&y, h, w, &taps);
    let exx = filter_valid(&xx, h, w, &taps);
    let eyy = filter_valid(&yy, h, w, &taps);
    let exy = filter_valid(&xy, h, w, &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let n = mx.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = exx[i] - ux * ux;
        let vy = eyy[i] - uy * uy;
        let cxy = exy[i] - ux * uy;
        let lum = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
        let cs = (2.0 * cxy + c2) / (vx + vy + c2);
        total += lum * cs;
    }
    total / n as f64
}

fn ssim_scaled(reference: &Tensor<f32>, test: &Tensor<f32>, scale: f64, peak: f64) -> Result<f64> {
    check_pair("ssim", reference, test)?;
    let s = reference.shape();
    if s.h < SSIM_WINDOW || s.w < SSIM_WINDOW {
        return Err(Error::shape(
            "ssim",
            format!(
                "frame {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
                s.h, s.w
            ),
        ));
    }
    let mut sum = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            sum += ssim_plane(
                reference.plane(n, c),
                test.plane(n, c),
                s.h,
                s.w,
                scale,
                peak,
            );
        }
    }
    Ok(sum / (s.n * s.c) as f64)
}

/// Mean local SSIM, Gaussian 11x11 window with σ 1.5, valid region only.
/// Channels are scored separately and averaged.
pub fn ssim(reference: &Tensor<f32>, test: &Tensor<f32>, peak: f64) -> Result<f64> {
    if peak.is_nan() || peak <= 0.0 {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    ssim_scaled(reference, test, 1.0, peak)
}

/// JSON encoding for dB values: `+inf` is written as the string `"inf"`.
pub mod db {
    use serde::{Deserialize, Deserializer, Serializer};

    pub const INF: &str = "inf";

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str(INF)
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == INF => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("bad dB value {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: usize,
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: SSIM_WINDOW,
            sigma: SSIM_SIGMA,
            k1: SSIM_K1,
            k2: SSIM_K2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub frames: Vec<FrameScore>,
    #[serde(with = "db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub peak: f64,
    pub ssim_params: SsimParams,
}

/// Scores `test` against `clean` frame by frame. The peak follows the clean
/// sequence's source bit depth.
pub fn evaluate_sequence(clean: &FrameSequence, test: &FrameSequence) -> Result<ScoreReport> {
    if clean.len() != test.len() {
        return Err(Error::shape(
            "evaluate_sequence",
            format!("{} clean frames vs {} test frames", clean.len(), test.len()),
        ));
    }
    if clean.frame_shape() != test.frame_shape() {
        return Err(Error::shape(
            "evaluate_sequence",
            format!("{} vs {}", clean.frame_shape(), test.frame_shape()),
        ));
    }
    let peak = clean.peak();
    let frames = (0..clean.len())
        .into_par_iter()
        .map(|t| {
            let (a, b) = (clean.frame(t), test.frame(t));
            Ok(FrameScore {
                frame_index: t,
                psnr_db: psnr_from_mse(mse_scaled(a.data(), b.data(), peak), peak),
                ssim: ssim_scaled(a, b, peak, peak)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = frames.len() as f64;
    Ok(ScoreReport {
        mean_psnr_db: frames.iter().map(|f| f.psnr_db).sum::<f64>() / n,
        mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
        frames,
        peak,
        ssim_params: SsimParams::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor<f32> {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Tensor::from_vec(Shape::new(1, 1, h, w), data).unwrap()
    }

    #[test]
    fn psnr_uniform_difference() {
        let a = img(8, 8, |_, _| 100.0);
        let b = img(8, 8, |_, _| 110.0);
        let v = psnr(&a, &b, 255.0).unwrap();
        assert!((v - 28.1308).abs() < 1e-3, "{v}");
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ssim_constant_images() {
        let a = img(16, 16, |_, _| 100.0);
        let b = img(16, 16, |_, _| 110.0);
        let expect =
            (2.0 * 100.0 * 110.0 + 6.5025) / (100.0f64.powi(2) + 110.0f64.powi(2) + 6.5025);
        assert!((ssim(&a, &b, 255.0).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = img(20, 17, |y, x| ((y * 31 + x * 17) % 251) as f32);
        let b = img(20, 17, |y, x| ((y * 7 + x * 3) % 200) as f32);
        assert_eq!(ssim(&a, &a, 255.0).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b, 255.0).unwrap(), ssim(&b, &a, 255.0).unwrap());
        assert!(ssim(&a, &b, 255.0).unwrap() < 0.9);
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let a = img(10, 20, |_, _| 0.0);
        assert!(ssim(&a, &a, 1.0).is_err());
    }

    #[test]
    fn db_sentinel_round_trip() {
        let s = FrameScore {
            frame_index: 0,
            psnr_db: f64::INFINITY,
            ssim: 1.0,
        };
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"psnr_db\":\"inf\""), "{j}");
        assert_eq!(serde_json::from_str::<FrameScore>(&j).unwrap(), s);
    }
}
