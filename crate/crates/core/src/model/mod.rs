//! The denoising network: temporal kernel, per-frame feature generator,
//! feature weighting and the blind-spot U-Net.

mod kernel;
pub mod net;
mod params;
pub mod pipeline;

pub use kernel::TemporalKernel;
pub use net::{apply_temporal_filter, denoise_forward, feature_generate, ParamVars};
pub use params::{Arch, LayerSpec, ModelParams};
pub use pipeline::{denoise_frame, denoise_video, window_indices, InferenceOptions};
