//! Unsupervised video denoising with a V-shaped temporal weighting kernel.
//!
//! A per-frame feature generator produces one feature map per input frame,
//! the maps are weighted by a kernel that is zero at the central frame and
//! one at the window ends, and a bias-free U-Net predicts the central frame.
//! Training only ever sees noisy frames: because the central frame's
//! features are multiplied by exactly zero, the network cannot copy its
//! own noise into the prediction.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use io::FrameSequence;
