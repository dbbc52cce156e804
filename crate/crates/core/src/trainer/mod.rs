//! Unsupervised training on noisy frames only, plus the ablation sweeps.
//!
//! Each iteration crops a batch of windows, predicts the centre crop from
//! the weighted features of the whole window and regresses it onto the
//! noisy centre crop with an L2 loss. Because the centre frame's features
//! are multiplied by zero, the only way to lower that loss is to predict
//! the signal, not the noise.

mod ablate;
mod data;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::db;
use crate::model::{
    denoise_frame, net, Arch, InferenceOptions, ModelParams, ParamVars, TemporalKernel,
};
use crate::tensor::{AdamState, Graph};

pub use ablate::{
    ablate, ablate_conditions, AblationMode, AblationReport, AblationRow, Condition, DEFAULT_FPS,
};
pub use data::{
    augment, flip_horizontal, reverse_time, sample_at, sample_patch_batch, NoisyDataset, Sample,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const MAX_EPOCHS: usize = 100;

/// Every knob of the training loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Window length N (odd).
    pub n_frames: usize,
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Initial learning rate.
    pub lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halving_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Leave wall-clock time out of the report so reruns are byte-identical.
    pub deterministic: bool,
    pub temporal_filter: bool,
    /// Spacing between window frames.
    pub stride: usize,
    pub augment: bool,
    /// Defaults to `ceil(training windows / batch_size)`.
    pub iterations_per_epoch: Option<usize>,
    /// Hard cap on optimizer steps across all epochs.
    pub max_iterations: Option<usize>,
    /// Trailing fraction of windows held out for validation.
    pub validation_fraction: f64,
    /// Network widths. `n_frames` and the channel counts are overwritten
    /// from this config and the dataset.
    pub model: Arch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_frames: 7,
            patch_size: 128,
            batch_size: 8,
            epochs: 25,
            lr: 1e-3,
            lr_halving_epochs: 10,
            patience: 5,
            seed: 0,
            deterministic: true,
            temporal_filter: true,
            stride: 1,
            augment: true,
            iterations_per_epoch: None,
            max_iterations: None,
            validation_fraction: 0.1,
            model: Arch::default(),
        }
    }
}

impl TrainConfig {
    /// Small-patch settings sized for a single CPU core.
    pub fn desk() -> Self {
        let mut c = Self {
            patch_size: 32,
            batch_size: 4,
            epochs: 25,
            iterations_per_epoch: Some(24),
            max_iterations: Some(5000),
            ..Self::default()
        };
        c.model.feature_channels = 8;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(m));
        if self.n_frames < 3 || self.n_frames.is_multiple_of(2) {
            return fail(format!(
                "n_frames must be odd and >= 3, got {}",
                self.n_frames
            ));
        }
        if self.patch_size < 16 || !self.patch_size.is_multiple_of(4) {
            return fail(format!(
                "patch_size must be a multiple of 4 and >= 16, got {}",
                self.patch_size
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return fail(format!(
                "epochs must be in 1..={MAX_EPOCHS}, got {}",
                self.epochs
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.lr_halving_epochs == 0 {
            return fail("lr_halving_epochs must be >= 1".into());
        }
        if self.stride == 0 {
            return fail("stride must be >= 1".into());
        }
        if self.iterations_per_epoch == Some(0) || self.max_iterations == Some(0) {
            return fail("iteration counts must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return fail(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }

    /// Fills in the architecture fields that follow from the window length
    /// and the data.
    pub fn resolve(&self, image_channels: usize) -> Result<Self> {
        self.validate()?;
        let mut c = self.clone();
        c.model.n_frames = c.n_frames;
        c.model.image_channels = image_channels;
        c.model.out_channels = image_channels;
        c.model.validate()?;
        Ok(c)
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.lr_halving_epochs.max(1)) as i32;
        self.lr * 0.5f64.powi(halvings)
    }

    pub fn kernel(&self) -> Result<Option<TemporalKernel>> {
        if self.temporal_filter {
            TemporalKernel::new(self.n_frames).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn inference_options(&self) -> Result<InferenceOptions> {
        Ok(InferenceOptions {
            kernel: self.kernel()?,
            stride: self.stride,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Ran every configured epoch.
    Completed,
    EarlyStop,
    /// `max_iterations` reached.
    IterationBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub tool_version: String,
    /// Fully resolved configuration.
    pub config: TrainConfig,
    /// Mean batch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Loss on centre crops of the held-out windows, per epoch.
    pub val_loss: Vec<f64>,
    pub lr: Vec<f64>,
    pub epochs_run: usize,
    pub iterations: usize,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// MSE against the noisy centre frame over all training windows at
    /// full resolution, using the kept parameters.
    pub final_train_mse: f64,
    /// `final_train_mse` in dB on a unit peak.
    #[serde(with = "db")]
    pub final_train_psnr_db: f64,
    pub stop_reason: StopReason,
    /// Omitted in deterministic mode.
    pub wall_time_s: Option<f64>,
}

/// Per-epoch progress passed to the observer of [`train_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub iterations: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Stop once the best loss is at least `patience` epochs old. Ties do not
/// count as improvements.
pub fn early_stop_check(history: &[f64], patience: usize) -> bool {
    let Some(last) = history.len().checked_sub(1) else {
        return false;
    };
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v < history[best] {
            best = i;
        }
    }
    best < last && last - best >= patience
}

pub fn train(ds: &NoisyDataset, config: &TrainConfig) -> Result<(ModelParams<f32>, TrainReport)> {
    train_with(ds, config, |_| {})
}

fn batch_loss(
    params: &ModelParams<f32>,
    x: crate::tensor::Tensor<f32>,
    y: crate::tensor::Tensor<f32>,
    kernel: Option<&TemporalKernel>,
    grads: bool,
) -> Result<(f64, Option<Vec<Vec<f32>>>)> {
    let mut g = Graph::<f32>::new();
    let pv = ParamVars::register(&mut g, params, grads)?;
    let xv = g.leaf(x)?;
    let yv = g.leaf(y)?;
    let pred = net::forward(&mut g, &pv, xv, kernel)?;
    let loss = g.mse(pred, yv)?;
    let value = g.scalar_f64(loss);
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    if !grads {
        return Ok((value, None));
    }
    g.backward(loss)?;
    let gs = pv
        .vars()
        .iter()
        .map(|&v| {
            g.grad(v)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::Numeric("missing parameter gradient".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((value, Some(gs)))
}

/// Mean full-frame MSE of the prediction against the noisy centre frame.
fn full_frame_mse(
    params: &ModelParams<f32>,
    ds: &NoisyDataset,
    centres: &[usize],
    opts: &InferenceOptions,
) -> Result<f64> {
    let seq = ds.sequence();
    let per: Vec<f64> = centres
        .par_iter()
        .map(|&t| {
            let out = denoise_frame(params, seq, t, opts)?;
            let sum: f64 = out
                .data()
                .iter()
                .zip(seq.frame(t).data())
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum();
            Ok(sum / out.numel() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    ds: &NoisyDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<(ModelParams<f32>, TrainReport)> {
    let started = Instant::now();
    let seq = ds.sequence();
    let cfg = config.resolve(seq.channels())?;
    let p = cfg.patch_size;
    if p > seq.height() || p > seq.width() {
        return Err(Error::invalid(format!(
            "patch_size {p} exceeds the {}x{} frames",
            seq.height(),
            seq.width()
        )));
    }
    let (train_c, val_c) = ds.split(cfg.validation_fraction);
    let kernel = cfg.kernel()?;
    let per_epoch = cfg
        .iterations_per_epoch
        .unwrap_or_else(|| train_c.len().div_ceil(cfg.batch_size));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f32>::init(&cfg.model, cfg.seed)?;
    let mut adam = AdamState::<f32>::new(cfg.lr);

    // fixed centre crops of the held-out windows
    let val_batch = if val_c.is_empty() {
        None
    } else {
        let origin = ((seq.height() - p) / 2, (seq.width() - p) / 2);
        let samples = val_c
            .iter()
            .map(|&t| sample_at(ds, &cfg, t, origin))
            .collect::<Result<Vec<_>>>()?;
        Some(data::collate(&samples))
    };

    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut lrs = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut iterations = 0usize;
    let mut stop = StopReason::Completed;

    'epochs: for epoch in 0..cfg.epochs {
        adam.lr = cfg.lr_at(epoch);
        let mut sum = 0.0;
        let mut count = 0usize;
        for _ in 0..per_epoch {
            if cfg.max_iterations.is_some_and(|m| iterations >= m) {
                break;
            }
            let samples = data::sample_from(ds, &cfg, &train_c, &mut rng)?;
            let (x, y) = data::collate(&samples);
            let (loss, grads) = batch_loss(&params, x, y, kernel.as_ref(), true)
                .map_err(|e| at_step(e, epoch, iterations))?;
            for (w, gr) in params
                .weights_mut()
                .iter_mut()
                .zip(grads.unwrap_or_default())
            {
                w.set_grad(gr)?;
            }
            adam.step(params.weights_mut())
                .map_err(|e| at_step(e, epoch, iterations))?;
            sum += loss;
            count += 1;
            iterations += 1;
        }
        if count == 0 {
            stop = StopReason::IterationBudget;
            break;
        }
        let tl = sum / count as f64;
        let vl = match &val_batch {
            Some((x, y)) => batch_loss(&params, x.clone(), y.clone(), kernel.as_ref(), false)?.0,
            None => tl,
        };
        train_loss.push(tl);
        val_loss.push(vl);
        lrs.push(adam.lr);
        if vl < best.0 {
            best = (vl, epoch, params.clone());
        }
        on_epoch(&EpochLog {
            epoch,
            iterations,
            train_loss: tl,
            val_loss: vl,
            lr: adam.lr,
        });
        if early_stop_check(&val_loss, cfg.patience) {
            stop = StopReason::EarlyStop;
            break 'epochs;
        }
        if cfg.max_iterations.is_some_and(|m| iterations >= m) {
            stop = if epoch + 1 < cfg.epochs {
                StopReason::IterationBudget
            } else {
                StopReason::Completed
            };
            break;
        }
    }

    let (best_val_loss, best_epoch, mut kept) = best;
    for w in kept.weights_mut() {
        w.zero_grad();
    }
    let final_train_mse = full_frame_mse(&kept, ds, &train_c, &cfg.inference_options()?)?;
    let report = TrainReport {
        tool_version: TOOL_VERSION.to_string(),
        epochs_run: train_loss.len(),
        train_loss,
        val_loss,
        lr: lrs,
        iterations,
        best_epoch,
        best_val_loss,
        final_train_mse,
        final_train_psnr_db: if final_train_mse == 0.0 {
            f64::INFINITY
        } else {
            -10.0 * final_train_mse.log10()
        },
        stop_reason: stop,
        wall_time_s: (!cfg.deterministic).then(|| started.elapsed().as_secs_f64()),
        config: cfg,
    };
    Ok((kept, report))
}

fn at_step(e: Error, epoch: usize, iteration: usize) -> Error {
    match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} (epoch {epoch}, iteration {iteration})")),
        Error::NonFinite(op) => Error::Numeric(format!(
            "non-finite value in {op} (epoch {epoch}, iteration {iteration})"
        )),
        other => other,
    }
}
