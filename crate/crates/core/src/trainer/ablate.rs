use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{train, NoisyDataset, TrainConfig, TrainReport, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::io::FrameSequence;
use crate::metrics::{db, evaluate_sequence};
use crate::model::denoise_video;

/// Frame rate assumed for stride sweeps when the data does not record one.
pub const DEFAULT_FPS: f64 = 120.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// Temporal filter off vs on.
    Tf,
    /// Window length N over 3, 5, 7, 9, 11.
    Frames,
    /// Frame stride 1, 2, 4, 5 (emulated lower frame rates).
    Stride,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tf" => Ok(Self::Tf),
            "frames" => Ok(Self::Frames),
            "stride" => Ok(Self::Stride),
            _ => Err(Error::invalid(format!("unknown ablation mode {s:?}"))),
        }
    }
}

/// One training run of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub n_frames: usize,
    pub stride: usize,
    pub temporal_filter: bool,
    /// Effective frame rate, stride sweeps only.
    pub fps: Option<f64>,
}

impl AblationMode {
    /// The sweep applied to `base`. `source_fps` is the capture rate of the
    /// full sequence.
    pub fn conditions(self, base: &TrainConfig, source_fps: f64) -> Vec<Condition> {
        let cond = |label: String, n, stride, tf, fps| Condition {
            label,
            n_frames: n,
            stride,
            temporal_filter: tf,
            fps,
        };
        match self {
            Self::Tf => vec![
                cond("G+D".into(), base.n_frames, base.stride, false, None),
                cond("G+TF+D".into(), base.n_frames, base.stride, true, None),
            ],
            Self::Frames => [3, 5, 7, 9, 11]
                .into_iter()
                .map(|n| cond(format!("N={n}"), n, base.stride, base.temporal_filter, None))
                .collect(),
            Self::Stride => [1, 2, 4, 5]
                .into_iter()
                .map(|s| {
                    let fps = source_fps / s as f64;
                    cond(
                        format!("stride={s}"),
                        base.n_frames,
                        s,
                        base.temporal_filter,
                        Some(fps),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: Condition,
    #[serde(with = "db")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub train: TrainReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub tool_version: String,
    pub mode: Option<AblationMode>,
    pub base_config: TrainConfig,
    /// Score of the noisy input itself, for reference.
    #[serde(with = "db")]
    pub noisy_psnr_db: f64,
    pub noisy_ssim: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Aligned text table, one row per condition.
    pub fn render_table(&self) -> String {
        let fps_col = self.rows.iter().any(|r| r.condition.fps.is_some());
        let width = self
            .rows
            .iter()
            .map(|r| r.condition.label.len())
            .chain([5])
            .max()
            .unwrap_or(5);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}", "Input");
        if fps_col {
            let _ = write!(s, "  {:>7}", "fps");
        }
        let _ = writeln!(s, "  {:>8}  {:>6}", "PSNR", "SSIM");
        let fmt_db = |v: f64| {
            if v.is_infinite() {
                "inf".to_string()
            } else {
                format!("{v:.2}")
            }
        };
        let mut line = |label: &str, fps: Option<f64>, p: f64, q: f64| {
            let _ = write!(s, "{label:<width$}");
            if fps_col {
                match fps {
                    Some(f) => {
                        let _ = write!(s, "  {f:>7.1}");
                    }
                    None => {
                        let _ = write!(s, "  {:>7}", "-");
                    }
                }
            }
            let _ = writeln!(s, "  {:>8}  {q:>6.4}", fmt_db(p));
        };
        line("noisy", None, self.noisy_psnr_db, self.noisy_ssim);
        for r in &self.rows {
            line(&r.condition.label, r.condition.fps, r.psnr_db, r.ssim);
        }
        s
    }
}

/// Runs one of the standard sweeps.
pub fn ablate(
    noisy: &NoisyDataset,
    clean: &FrameSequence,
    base: &TrainConfig,
    mode: AblationMode,
) -> Result<AblationReport> {
    let fps = noisy.sequence().fps.or(clean.fps).unwrap_or(DEFAULT_FPS);
    let conds = mode.conditions(base, fps);
    let mut report = ablate_conditions(noisy, clean, base, &conds)?;
    report.mode = Some(mode);
    Ok(report)
}

/// Retrains from scratch for every condition and scores the denoised
/// sequence against `clean`. Clean frames are used only for scoring.
pub fn ablate_conditions(
    noisy: &NoisyDataset,
    clean: &FrameSequence,
    base: &TrainConfig,
    conditions: &[Condition],
) -> Result<AblationReport> {
    let seq = noisy.sequence();
    if clean.len() != seq.len() || clean.frame_shape() != seq.frame_shape() {
        return Err(Error::shape(
            "ablate",
            format!(
                "clean {}x{} frames vs noisy {}x{}",
                clean.len(),
                clean.frame_shape(),
                seq.len(),
                seq.frame_shape()
            ),
        ));
    }
    let reference = evaluate_sequence(clean, seq)?;
    let mut rows = Vec::with_capacity(conditions.len());
    for c in conditions {
        let cfg = TrainConfig {
            n_frames: c.n_frames,
            stride: c.stride,
            temporal_filter: c.temporal_filter,
            ..base.clone()
        };
        let (params, train_report) = train(noisy, &cfg)?;
        let denoised = denoise_video(&params, seq, &train_report.config.inference_options()?)?;
        let score = evaluate_sequence(clean, &denoised)?;
        rows.push(AblationRow {
            condition: c.clone(),
            psnr_db: score.mean_psnr_db,
            ssim: score.mean_ssim,
            train: train_report,
        });
    }
    Ok(AblationReport {
        tool_version: TOOL_VERSION.to_string(),
        mode: None,
        base_config: base.clone(),
        noisy_psnr_db: reference.mean_psnr_db,
        noisy_ssim: reference.mean_ssim,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(m: AblationMode) -> Vec<String> {
        m.conditions(&TrainConfig::default(), DEFAULT_FPS)
            .into_iter()
            .map(|c| c.label)
            .collect()
    }

    #[test]
    fn sweep_rows() {
        assert_eq!(labels(AblationMode::Tf), ["G+D", "G+TF+D"]);
        assert_eq!(
            labels(AblationMode::Frames),
            ["N=3", "N=5", "N=7", "N=9", "N=11"]
        );
        assert_eq!(
            labels(AblationMode::Stride),
            ["stride=1", "stride=2", "stride=4", "stride=5"]
        );
    }

    #[test]
    fn tf_rows_toggle_only_the_filter() {
        let c = AblationMode::Tf.conditions(&TrainConfig::default(), DEFAULT_FPS);
        assert!(!c[0].temporal_filter && c[1].temporal_filter);
        assert_eq!((c[0].n_frames, c[0].stride), (c[1].n_frames, c[1].stride));
    }

    #[test]
    fn stride_fps_mapping() {
        let fps: Vec<f64> = AblationMode::Stride
            .conditions(&TrainConfig::default(), 120.0)
            .iter()
            .map(|c| c.fps.unwrap())
            .collect();
        assert_eq!(fps, [120.0, 60.0, 30.0, 24.0]);
    }

    #[test]
    fn mode_names() {
        assert_eq!("tf".parse::<AblationMode>().unwrap(), AblationMode::Tf);
        assert!("fps".parse::<AblationMode>().is_err());
        assert_eq!(
            serde_json::to_string(&AblationMode::Frames).unwrap(),
            "\"frames\""
        );
    }
}
