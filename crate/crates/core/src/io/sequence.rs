use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Ordered video frames sharing one `(C, H, W)` geometry.
///
/// Values are floats; data decoded from 8-bit files lies in `[0, 1]`, noisy
/// float data may fall outside it.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Tensor<f32>>,
    channels: usize,
    height: usize,
    width: usize,
    /// Bit depth of the data this sequence was decoded from (8 or 32).
    pub bit_depth: u32,
    /// Nominal capture rate; metadata only.
    pub fps: Option<f64>,
}

impl FrameSequence {
    /// Builds a sequence from `(1, C, H, W)` frames.
    pub fn new(frames: Vec<Tensor<f32>>, bit_depth: u32) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("frame sequence is empty"))?
            .shape();
        for (i, f) in frames.iter().enumerate() {
            let s = f.shape();
            if s.n != 1 {
                return Err(Error::shape(
                    "frame_sequence",
                    format!("frame {i} has batch {}", s.n),
                ));
            }
            if s != first {
                return Err(Error::shape(
                    "frame_sequence",
                    format!("frame {i} is {s}, frame 0 is {first}"),
                ));
            }
        }
        Ok(Self {
            channels: first.c,
            height: first.h,
            width: first.w,
            frames,
            bit_depth,
            fps: None,
        })
    }

    /// Builds a sequence from flat `C*H*W` buffers.
    pub fn from_buffers(
        buffers: Vec<Vec<f32>>,
        channels: usize,
        height: usize,
        width: usize,
        bit_depth: u32,
    ) -> Result<Self> {
        let shape = Shape::new(1, channels, height, width);
        let frames = buffers
            .into_iter()
            .map(|b| Tensor::from_vec(shape, b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames, bit_depth)
    }

    pub fn with_fps(mut self, fps: Option<f64>) -> Self {
        self.fps = fps;
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn frame_shape(&self) -> Shape {
        Shape::new(1, self.channels, self.height, self.width)
    }

    pub fn frame(&self, t: usize) -> &Tensor<f32> {
        &self.frames[t]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut Tensor<f32> {
        &mut self.frames[t]
    }

    pub fn frames(&self) -> &[Tensor<f32>] {
        &self.frames
    }

    /// Value that plays the role of full scale when scoring.
    pub fn peak(&self) -> f64 {
        if self.bit_depth == 8 {
            255.0
        } else {
            1.0
        }
    }
}
