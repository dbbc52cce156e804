//! Graph construction for the feature generator, the temporal weighting
//! and the U-Net denoiser.

use super::params::{layer, ModelParams};
use super::TemporalKernel;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Var};

/// Parameter tensors registered on a graph, in layer order.
pub struct ParamVars {
    vars: Vec<Var>,
    specs: Vec<super::LayerSpec>,
    arch: super::Arch,
}

impl ParamVars {
    /// Registers every weight as a leaf. With `train` set the leaves collect
    /// gradients.
    pub fn register<T: Real>(
        g: &mut Graph<T>,
        params: &ModelParams<T>,
        train: bool,
    ) -> Result<Self> {
        let vars = params
            .weights()
            .iter()
            .map(|w| {
                let mut w = w.clone();
                w.zero_grad();
                w.requires_grad = train;
                g.leaf(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vars,
            specs: params.specs().to_vec(),
            arch: params.arch.clone(),
        })
    }

    /// Wraps leaves that already hold the weights of `arch`, in layer order.
    pub fn bind(arch: &super::Arch, vars: Vec<Var>) -> Result<Self> {
        let specs = arch.layers();
        if specs.len() != vars.len() {
            return Err(Error::shape(
                "bind_params",
                format!("{} vars for {} layers", vars.len(), specs.len()),
            ));
        }
        Ok(Self {
            vars,
            specs,
            arch: arch.clone(),
        })
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn conv<T: Real>(&self, g: &mut Graph<T>, idx: usize, x: Var) -> Result<Var> {
        let spec = &self.specs[idx];
        let y = g.conv2d(x, self.vars[idx], 1, spec.pad(), spec.groups)?;
        Ok(if spec.relu { g.relu(y) } else { y })
    }

    fn block<T: Real>(&self, g: &mut Graph<T>, idx: [usize; 3], x: Var) -> Result<Var> {
        idx.into_iter().try_fold(x, |h, i| self.conv(g, i, h))
    }
}

/// Runs the depthwise feature generator on a stacked window
/// `(B, N * C_img, H, W)` and returns one `(B, C_f, H, W)` map per frame.
pub fn feature_generate<T: Real>(
    g: &mut Graph<T>,
    pv: &ParamVars,
    window: Var,
) -> Result<Vec<Var>> {
    let arch = &pv.arch;
    let s = g.shape(window);
    if s.c != arch.n_frames * arch.image_channels {
        return Err(Error::shape(
            "feature_generate",
            format!(
                "window has {} channels, expected {} frames x {} channels",
                s.c, arch.n_frames, arch.image_channels
            ),
        ));
    }
    let stack = pv.block(g, layer::GEN, window)?;
    (0..arch.n_frames)
        .map(|t| g.slice_channels(stack, t * arch.feature_channels, arch.feature_channels))
        .collect()
}

/// Scales frame `t`'s features by the kernel weight `t`. `None` bypasses
/// the filter (every weight one).
pub fn apply_temporal_filter<T: Real>(
    g: &mut Graph<T>,
    features: &[Var],
    kernel: Option<&TemporalKernel>,
) -> Result<Vec<Var>> {
    let Some(kernel) = kernel else {
        return Ok(features.to_vec());
    };
    if kernel.len() != features.len() {
        return Err(Error::shape(
            "apply_temporal_filter",
            format!(
                "kernel length {} for {} feature maps",
                kernel.len(),
                features.len()
            ),
        ));
    }
    features
        .iter()
        .zip(kernel.weights())
        .map(|(&f, &w)| g.scale(f, T::from_f64(w)))
        .collect()
}

/// U-Net over the concatenated weighted features. Output is
/// `(B, C_out, H, W)`; `H` and `W` must be multiples of 4.
pub fn denoise_forward<T: Real>(g: &mut Graph<T>, pv: &ParamVars, weighted: &[Var]) -> Result<Var> {
    let mut iter = weighted.iter().copied();
    let first = iter
        .next()
        .ok_or_else(|| Error::shape("denoise_forward", "no feature maps"))?;
    let stack = iter.try_fold(first, |acc, f| g.concat_channels(acc, f))?;
    let s = g.shape(stack);
    if s.c != pv.arch.stack_channels() {
        return Err(Error::shape(
            "denoise_forward",
            format!(
                "{} input channels, expected {}",
                s.c,
                pv.arch.stack_channels()
            ),
        ));
    }
    if !s.h.is_multiple_of(4) || !s.w.is_multiple_of(4) {
        return Err(Error::shape(
            "denoise_forward",
            format!("spatial dims {}x{} must be multiples of 4", s.h, s.w),
        ));
    }

    let e1 = pv.block(g, layer::ENC1, stack)?;
    let e1 = g.maxpool2(e1)?;
    let e2 = pv.block(g, layer::ENC2, e1)?;
    let e2 = g.maxpool2(e2)?;
    let e3 = pv.block(g, layer::ENC3, e2)?;

    let up = g.upsample2(e3);
    let d1 = g.concat_channels(up, e1)?;
    let d1 = pv.block(g, layer::DEC1, d1)?;

    let up = g.upsample2(d1);
    let d2 = g.concat_channels(up, stack)?;
    let d2 = pv.block(g, layer::DEC2, d2)?;

    pv.block(g, layer::HEAD, d2)
}

/// Feature generation, temporal weighting and denoising in one call.
pub fn forward<T: Real>(
    g: &mut Graph<T>,
    pv: &ParamVars,
    window: Var,
    kernel: Option<&TemporalKernel>,
) -> Result<Var> {
    let feats = feature_generate(g, pv, window)?;
    let weighted = apply_temporal_filter(g, &feats, kernel)?;
    denoise_forward(g, pv, &weighted)
}
