use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Architecture record: everything needed to rebuild the layer table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arch {
    /// Frames per input window (odd).
    pub n_frames: usize,
    /// Channels of one input frame (1 grayscale, 3 RGB).
    pub image_channels: usize,
    /// Feature maps produced per frame by the feature generator.
    pub feature_channels: usize,
    /// Channels of the denoised output frame.
    pub out_channels: usize,
    pub encoder_width: usize,
    /// Width of the first two convs of the third encoder.
    pub bottleneck_width: usize,
    pub decoder_width: usize,
    /// Widths of the first two 1x1 convs after the U-Net.
    pub head_widths: [usize; 2],
}

impl Default for Arch {
    fn default() -> Self {
        Self {
            n_frames: 7,
            image_channels: 1,
            feature_channels: 16,
            out_channels: 1,
            encoder_width: 48,
            bottleneck_width: 96,
            decoder_width: 96,
            head_widths: [384, 96],
        }
    }
}

/// Shape and wiring of one bias-free convolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub groups: usize,
    pub relu: bool,
}

impl LayerSpec {
    fn new(name: &str, out: usize, inp: usize, kernel: usize, groups: usize, relu: bool) -> Self {
        Self {
            name: name.to_string(),
            out_channels: out,
            in_channels: inp,
            kernel,
            groups,
            relu,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        )
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels / self.groups * self.kernel * self.kernel
    }

    pub fn pad(&self) -> usize {
        self.kernel / 2
    }
}

impl Arch {
    /// The full-width network for `n_frames` frames of `image_channels`.
    pub fn new(n_frames: usize, image_channels: usize) -> Self {
        Self {
            n_frames,
            image_channels,
            out_channels: image_channels,
            ..Self::default()
        }
    }

    pub fn with_feature_channels(mut self, c: usize) -> Self {
        self.feature_channels = c;
        self
    }

    /// Channels of the stacked per-frame feature maps.
    pub fn stack_channels(&self) -> usize {
        self.n_frames * self.feature_channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 3 || self.n_frames.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "n_frames must be odd and >= 3, got {}",
                self.n_frames
            )));
        }
        let widths = [
            ("image_channels", self.image_channels),
            ("feature_channels", self.feature_channels),
            ("out_channels", self.out_channels),
            ("encoder_width", self.encoder_width),
            ("bottleneck_width", self.bottleneck_width),
            ("decoder_width", self.decoder_width),
            ("head_widths[0]", self.head_widths[0]),
            ("head_widths[1]", self.head_widths[1]),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Every convolution in forward order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let n = self.n_frames;
        let stack = self.stack_channels();
        let (e, b, d) = (
            self.encoder_width,
            self.bottleneck_width,
            self.decoder_width,
        );
        let [h0, h1] = self.head_widths;
        vec![
            LayerSpec::new("gen.0", stack, n * self.image_channels, 3, n, true),
            LayerSpec::new("gen.1", stack, stack, 3, n, true),
            LayerSpec::new("gen.2", stack, stack, 3, n, false),
            LayerSpec::new("enc1.0", e, stack, 3, 1, true),
            LayerSpec::new("enc1.1", e, e, 3, 1, true),
            LayerSpec::new("enc1.2", e, e, 3, 1, true),
            LayerSpec::new("enc2.0", e, e, 3, 1, true),
            LayerSpec::new("enc2.1", e, e, 3, 1, true),
            LayerSpec::new("enc2.2", e, e, 3, 1, true),
            LayerSpec::new("enc3.0", b, e, 3, 1, true),
            LayerSpec::new("enc3.1", b, b, 3, 1, true),
            LayerSpec::new("enc3.2", e, b, 3, 1, true),
            LayerSpec::new("dec1.0", d, 2 * e, 3, 1, true),
            LayerSpec::new("dec1.1", d, d, 3, 1, true),
            LayerSpec::new("dec1.2", d, d, 3, 1, true),
            LayerSpec::new("dec2.0", d, d + stack, 3, 1, true),
            LayerSpec::new("dec2.1", d, d, 3, 1, true),
            LayerSpec::new("dec2.2", d, d, 3, 1, true),
            LayerSpec::new("head.0", h0, d, 1, 1, true),
            LayerSpec::new("head.1", h1, h0, 1, 1, true),
            LayerSpec::new("head.2", self.out_channels, h1, 1, 1, false),
        ]
    }
}

pub(crate) mod layer {
    pub const GEN: [usize; 3] = [0, 1, 2];
    pub const ENC1: [usize; 3] = [3, 4, 5];
    pub const ENC2: [usize; 3] = [6, 7, 8];
    pub const ENC3: [usize; 3] = [9, 10, 11];
    pub const DEC1: [usize; 3] = [12, 13, 14];
    pub const DEC2: [usize; 3] = [15, 16, 17];
    pub const HEAD: [usize; 3] = [18, 19, 20];
    #[cfg(test)]
    pub const COUNT: usize = 21;
}

/// All learnable weights of the feature generator and the denoiser.
/// There are no bias terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T: Real = f32> {
    pub arch: Arch,
    specs: Vec<LayerSpec>,
    weights: Vec<Tensor<T>>,
}

impl<T: Real> ModelParams<T> {
    /// Seeded init: uniform in `+-sqrt(6 / fan_in)`, layers drawn in order.
    pub fn init(arch: &Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = arch.layers();
        let weights = specs
            .iter()
            .map(|s| {
                let bound = (6.0 / s.fan_in() as f64).sqrt();
                Tensor::uniform(s.weight_shape(), bound, &mut rng)
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            specs,
            weights,
        })
    }

    /// Assembles params from externally supplied weights (e.g. a checkpoint),
    /// checking each against the architecture.
    pub fn from_weights(arch: &Arch, weights: Vec<Tensor<T>>) -> Result<Self> {
        arch.validate()?;
        let specs = arch.layers();
        if specs.len() != weights.len() {
            return Err(Error::shape(
                "model_params",
                format!("expected {} tensors, got {}", specs.len(), weights.len()),
            ));
        }
        for (s, w) in specs.iter().zip(&weights) {
            if s.weight_shape() != w.shape() {
                return Err(Error::shape(
                    "model_params",
                    format!(
                        "{}: expected {}, got {}",
                        s.name,
                        s.weight_shape(),
                        w.shape()
                    ),
                ));
            }
        }
        Ok(Self {
            arch: arch.clone(),
            specs,
            weights,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn weights(&self) -> &[Tensor<T>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.weights
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            arch: self.arch.clone(),
            specs: self.specs.clone(),
            weights: self.weights.iter().map(Tensor::cast).collect(),
        }
    }
}
