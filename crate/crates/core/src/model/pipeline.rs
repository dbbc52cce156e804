//! Whole-frame inference: window assembly, boundary handling and the
//! per-frame / per-video drivers.

use rayon::prelude::*;

use super::net::{self, ParamVars};
use super::{ModelParams, TemporalKernel};
use crate::error::{Error, Result};
use crate::io::FrameSequence;
use crate::tensor::{Graph, Shape, Tensor};

/// Mirror index into `0..len` (edge sample not repeated).
pub fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let j = i.rem_euclid(period);
    if j >= len as isize {
        (period - j) as usize
    } else {
        j as usize
    }
}

/// Source frame indices of the `n`-frame window centred on `t`, spaced by
/// `stride`.
///
/// Out-of-range neighbours are mirrored about the centre frame, so at
/// `t = 0` the window is `[k..1, 0, 1..k]`. The centre frame never
/// reappears at another position unless the sequence has a single frame.
pub fn window_indices(t: usize, len: usize, n: usize, stride: usize) -> Result<Vec<usize>> {
    if t >= len {
        return Err(Error::invalid(format!(
            "frame {t} out of range for {len} frames"
        )));
    }
    if n.is_multiple_of(2) || stride == 0 {
        return Err(Error::invalid(format!(
            "window needs odd length and positive stride, got n={n} stride={stride}"
        )));
    }
    let k = (n / 2) as isize;
    let (t_i, len_i, s) = (t as isize, len as isize, stride as isize);
    let in_range = |i: isize| (0..len_i).contains(&i);
    Ok((-k..=k)
        .map(|o| {
            let fwd = t_i + o * s;
            let mirrored = t_i - o * s;
            if in_range(fwd) {
                fwd as usize
            } else if in_range(mirrored) {
                mirrored as usize
            } else {
                let r = reflect(fwd, len);
                if r == t && len > 1 {
                    if t + 1 < len {
                        t + 1
                    } else {
                        t - 1
                    }
                } else {
                    r
                }
            }
        })
        .collect())
}

/// Stacks the given frames channel-wise into a `(1, n*C, H, W)` tensor.
pub fn stack_frames(seq: &FrameSequence, indices: &[usize]) -> Tensor<f32> {
    let fs = seq.frame_shape();
    let mut data = Vec::with_capacity(indices.len() * fs.numel());
    for &i in indices {
        data.extend_from_slice(seq.frame(i).data());
    }
    Tensor::from_vec_unchecked(Shape::new(1, indices.len() * fs.c, fs.h, fs.w), data)
}

/// Mirror-pads a `(1, C, H, W)` tensor on the bottom/right up to `(h, w)`.
fn pad_to(x: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return x.clone();
    }
    let mut out = Vec::with_capacity(s.n * s.c * h * w);
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = x.plane(n, c);
            for y in 0..h {
                let sy = reflect(y as isize, s.h);
                for xx in 0..w {
                    out.push(plane[sy * s.w + reflect(xx as isize, s.w)]);
                }
            }
        }
    }
    Tensor::from_vec_unchecked(Shape::new(s.n, s.c, h, w), out)
}

fn crop_to(x: Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let s = x.shape();
    if (s.h, s.w) == (h, w) {
        return x;
    }
    let mut out = Vec::with_capacity(s.n * s.c * h * w);
    for n in 0..s.n {
        for c in 0..s.c {
            let plane = x.plane(n, c);
            for y in 0..h {
                out.extend_from_slice(&plane[y * s.w..y * s.w + w]);
            }
        }
    }
    Tensor::from_vec_unchecked(Shape::new(s.n, s.c, h, w), out)
}

/// How frames are fed to the network at inference time.
#[derive(Clone, Debug, PartialEq)]
pub struct InferenceOptions {
    /// `None` bypasses the temporal filter.
    pub kernel: Option<TemporalKernel>,
    pub stride: usize,
}

impl InferenceOptions {
    pub fn for_arch(n_frames: usize) -> Result<Self> {
        Ok(Self {
            kernel: Some(TemporalKernel::new(n_frames)?),
            stride: 1,
        })
    }
}

/// Denoises frame `t` of `seq` at full resolution. Returns `(1, C_out, H, W)`.
pub fn denoise_frame(
    params: &ModelParams<f32>,
    seq: &FrameSequence,
    t: usize,
    opts: &InferenceOptions,
) -> Result<Tensor<f32>> {
    let arch = &params.arch;
    if seq.channels() != arch.image_channels {
        return Err(Error::shape(
            "denoise_frame",
            format!(
                "sequence has {} channels, model expects {}",
                seq.channels(),
                arch.image_channels
            ),
        ));
    }
    let idx = window_indices(t, seq.len(), arch.n_frames, opts.stride)?;
    let (h, w) = (seq.height(), seq.width());
    let window = pad_to(
        &stack_frames(seq, &idx),
        h.div_ceil(4) * 4,
        w.div_ceil(4) * 4,
    );

    let mut g = Graph::<f32>::new();
    let pv = ParamVars::register(&mut g, params, false)?;
    let x = g.leaf(window)?;
    let y = net::forward(&mut g, &pv, x, opts.kernel.as_ref())?;
    Ok(crop_to(g.take(y), h, w))
}

/// Denoises every frame. Output has the same length and geometry as the
/// input when `C_out == C_img`.
pub fn denoise_video(
    params: &ModelParams<f32>,
    seq: &FrameSequence,
    opts: &InferenceOptions,
) -> Result<FrameSequence> {
    if seq.is_empty() {
        return Err(Error::invalid("cannot denoise an empty sequence"));
    }
    let frames = (0..seq.len())
        .into_par_iter()
        .map(|t| denoise_frame(params, seq, t, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSequence::new(frames, seq.bit_depth)?.with_fps(seq.fps))
}
