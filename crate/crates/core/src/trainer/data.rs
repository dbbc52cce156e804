use std::path::{Path, PathBuf};

use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::io::{read_sequence, FrameSequence};
use crate::model::window_indices;
use crate::tensor::{Shape, Tensor};

/// A materialized noisy sequence. This is the only data the training loop
/// accepts; clean frames never enter it.
#[derive(Clone, Debug)]
pub struct NoisyDataset {
    seq: FrameSequence,
    source: Option<PathBuf>,
}

impl NoisyDataset {
    pub fn load(manifest: &Path) -> Result<Self> {
        let seq = read_sequence(manifest)?;
        if seq.is_empty() {
            return Err(Error::invalid(format!(
                "{}: dataset has no frames",
                manifest.display()
            )));
        }
        Ok(Self {
            seq,
            source: Some(manifest.to_path_buf()),
        })
    }

    /// Wraps frames that are already in memory.
    pub fn from_sequence(seq: FrameSequence) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::invalid("dataset has no frames"));
        }
        Ok(Self { seq, source: None })
    }

    pub fn sequence(&self) -> &FrameSequence {
        &self.seq
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }

    /// Centre frames used for training and for validation. The last
    /// `fraction` of windows (at least one, when there are two or more) is
    /// held out.
    pub fn split(&self, fraction: f64) -> (Vec<usize>, Vec<usize>) {
        let len = self.seq.len();
        let held = if len < 2 || fraction <= 0.0 {
            0
        } else {
            ((len as f64 * fraction).ceil() as usize).clamp(1, len - 1)
        };
        ((0..len - held).collect(), (len - held..len).collect())
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `(1, N * C, p, p)`: the same crop from each window frame, in time order.
    pub window: Tensor<f32>,
    /// `(1, C, p, p)`: the centre frame's crop.
    pub target: Tensor<f32>,
    /// Source frame of each window slot.
    pub frames: Vec<usize>,
    /// Top-left corner of the crop.
    pub origin: (usize, usize),
}

impl Sample {
    fn n_frames(&self) -> usize {
        self.frames.len()
    }
}

fn crop(frame: &Tensor<f32>, y0: usize, x0: usize, p: usize, out: &mut Vec<f32>) {
    let s = frame.shape();
    for c in 0..s.c {
        let plane = frame.plane(0, c);
        for y in y0..y0 + p {
            out.extend_from_slice(&plane[y * s.w + x0..y * s.w + x0 + p]);
        }
    }
}

/// Crops the window centred on `t` at `(y0, x0)`.
pub fn sample_at(
    ds: &NoisyDataset,
    config: &TrainConfig,
    t: usize,
    origin: (usize, usize),
) -> Result<Sample> {
    let seq = &ds.seq;
    let p = config.patch_size;
    let (y0, x0) = origin;
    if y0 + p > seq.height() || x0 + p > seq.width() {
        return Err(Error::shape(
            "sample_patch",
            format!(
                "{p}x{p} patch at ({y0}, {x0}) exceeds {}x{} frame",
                seq.height(),
                seq.width()
            ),
        ));
    }
    let frames = window_indices(t, seq.len(), config.n_frames, config.stride)?;
    let c = seq.channels();
    let mut data = Vec::with_capacity(frames.len() * c * p * p);
    for &i in &frames {
        crop(seq.frame(i), y0, x0, p, &mut data);
    }
    let mut target = Vec::with_capacity(c * p * p);
    crop(seq.frame(t), y0, x0, p, &mut target);
    Ok(Sample {
        window: Tensor::from_vec_unchecked(Shape::new(1, frames.len() * c, p, p), data),
        target: Tensor::from_vec_unchecked(Shape::new(1, c, p, p), target),
        frames,
        origin,
    })
}

/// Draws `batch_size` windows uniformly from the training split, each with
/// its own uniformly placed crop, and applies augmentation if enabled.
pub fn sample_patch_batch(
    ds: &NoisyDataset,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Sample>> {
    let (train, _) = ds.split(config.validation_fraction);
    sample_from(ds, config, &train, rng)
}

pub(crate) fn sample_from(
    ds: &NoisyDataset,
    config: &TrainConfig,
    centres: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<Sample>> {
    let p = config.patch_size;
    let (h, w) = (ds.seq.height(), ds.seq.width());
    if p > h || p > w {
        return Err(Error::shape(
            "sample_patch_batch",
            format!("patch {p} larger than {h}x{w} frame"),
        ));
    }
    if centres.is_empty() {
        return Err(Error::invalid("no training windows"));
    }
    (0..config.batch_size)
        .map(|_| {
            let t = centres[rng.random_range(0..centres.len())];
            let origin = (rng.random_range(0..=h - p), rng.random_range(0..=w - p));
            let s = sample_at(ds, config, t, origin)?;
            Ok(if config.augment { augment(s, rng) } else { s })
        })
        .collect()
}

/// Reverses the order of frames in the window. The centre slot, and hence
/// the target, is unchanged.
pub fn reverse_time(mut s: Sample) -> Sample {
    let n = s.n_frames();
    let block = s.window.numel() / n;
    let data = s.window.data_mut();
    for i in 0..n / 2 {
        let (head, tail) = data.split_at_mut((n - 1 - i) * block);
        head[i * block..(i + 1) * block].swap_with_slice(&mut tail[..block]);
    }
    s.frames.reverse();
    s
}

fn flip_rows(t: &mut Tensor<f32>) {
    let w = t.shape().w;
    t.data_mut().chunks_mut(w).for_each(<[f32]>::reverse);
}

/// Mirrors window and target left to right.
pub fn flip_horizontal(mut s: Sample) -> Sample {
    flip_rows(&mut s.window);
    flip_rows(&mut s.target);
    s
}

/// Time reversal and horizontal flip, each with probability 1/2.
pub fn augment(mut s: Sample, rng: &mut impl Rng) -> Sample {
    if rng.random::<bool>() {
        s = reverse_time(s);
    }
    if rng.random::<bool>() {
        s = flip_horizontal(s);
    }
    s
}

/// Stacks samples into `(B, N * C, p, p)` inputs and `(B, C, p, p)` targets.
pub(crate) fn collate(samples: &[Sample]) -> (Tensor<f32>, Tensor<f32>) {
    let ws = samples[0].window.shape();
    let ts = samples[0].target.shape();
    let b = samples.len();
    let mut x = Vec::with_capacity(b * ws.numel());
    let mut y = Vec::with_capacity(b * ts.numel());
    for s in samples {
        x.extend_from_slice(s.window.data());
        y.extend_from_slice(s.target.data());
    }
    (
        Tensor::from_vec_unchecked(Shape::new(b, ws.c, ws.h, ws.w), x),
        Tensor::from_vec_unchecked(Shape::new(b, ts.c, ts.h, ts.w), y),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(frames: usize, c: usize, h: usize, w: usize) -> NoisyDataset {
        let fs = (0..frames)
            .map(|t| {
                let data = (0..c * h * w).map(|i| (t * 1000 + i) as f32).collect();
                Tensor::from_vec(Shape::new(1, c, h, w), data).unwrap()
            })
            .collect();
        NoisyDataset::from_sequence(FrameSequence::new(fs, 32).unwrap()).unwrap()
    }

    fn cfg(n: usize, p: usize, stride: usize) -> TrainConfig {
        TrainConfig {
            n_frames: n,
            patch_size: p,
            stride,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn same_crop_from_every_frame() {
        let ds = ramp(20, 1, 24, 20);
        let s = sample_at(&ds, &cfg(7, 16, 1), 10, (3, 2)).unwrap();
        assert_eq!(s.frames, (7..=13).collect::<Vec<_>>());
        for (slot, &f) in s.frames.iter().enumerate() {
            for y in 0..16 {
                for x in 0..16 {
                    let want = (f * 1000 + (y + 3) * 20 + x + 2) as f32;
                    assert_eq!(s.window.at(0, slot, y, x), want);
                }
            }
        }
        assert_eq!(s.target.data(), s.window.plane(0, 3));
    }

    #[test]
    fn stride_spacing() {
        let ds = ramp(60, 1, 16, 16);
        let s = sample_at(&ds, &cfg(7, 16, 4), 40, (0, 0)).unwrap();
        assert_eq!(s.frames, vec![28, 32, 36, 40, 44, 48, 52]);
    }

    #[test]
    fn oversized_patch_rejected() {
        let ds = ramp(5, 1, 16, 16);
        assert!(sample_at(&ds, &cfg(3, 16, 1), 2, (1, 0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_patch_batch(&ds, &cfg(3, 20, 1), &mut rng).is_err());
    }

    #[test]
    fn augmentations_are_involutions() {
        let ds = ramp(12, 3, 16, 16);
        let s = sample_at(&ds, &cfg(5, 16, 1), 6, (0, 0)).unwrap();
        let r = reverse_time(s.clone());
        assert_eq!(r.target, s.target);
        assert_eq!(r.window.plane(0, 6), s.window.plane(0, 6));
        assert_ne!(r.window, s.window);
        assert_eq!(reverse_time(r), s);
        let f = flip_horizontal(s.clone());
        assert_eq!(f.window.at(0, 0, 2, 0), s.window.at(0, 0, 2, 15));
        assert_eq!(flip_horizontal(f), s);
    }

    #[test]
    fn reversal_moves_whole_frames() {
        let ds = ramp(12, 3, 16, 16);
        let s = sample_at(&ds, &cfg(5, 16, 1), 6, (0, 0)).unwrap();
        let r = reverse_time(s.clone());
        for slot in 0..5 {
            for c in 0..3 {
                assert_eq!(
                    r.window.plane(0, slot * 3 + c),
                    s.window.plane(0, (4 - slot) * 3 + c)
                );
            }
        }
    }

    #[test]
    fn split_holds_out_tail() {
        let ds = ramp(60, 1, 16, 16);
        let (tr, va) = ds.split(0.1);
        assert_eq!(tr, (0..54).collect::<Vec<_>>());
        assert_eq!(va, (54..60).collect::<Vec<_>>());
        let (tr, va) = ramp(1, 1, 16, 16).split(0.1);
        assert_eq!((tr.len(), va.len()), (1, 0));
    }

    #[test]
    fn batch_is_seeded() {
        let ds = ramp(30, 1, 32, 32);
        let c = TrainConfig {
            batch_size: 4,
            ..cfg(5, 16, 1)
        };
        let a = sample_patch_batch(&ds, &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_patch_batch(&ds, &c, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|s| s.frames[2] < 27));
        let (x, y) = collate(&a);
        assert_eq!(x.shape(), Shape::new(4, 5, 16, 16));
        assert_eq!(y.shape(), Shape::new(4, 1, 16, 16));
    }
}
