//! Trains on a synthetic drifting texture with Gaussian noise and reports
//! clean-referenced scores. Optional args: `tf_off`, `iters=N`, `patch=P`,
//! `batch=B`, `cf=C`, `ipe=N`, `frames=N`, `epochs=N`, `lr=X`.

use std::time::Instant;

use tempoden_core::metrics::evaluate_sequence;
use tempoden_core::model::denoise_video;
use tempoden_core::noise::{corrupt, NoiseFamily, NoiseSpec};
use tempoden_core::synth::{translating_texture, TextureSpec};
use tempoden_core::trainer::{train_with, NoisyDataset, TrainConfig};

fn main() -> tempoden_core::Result<()> {
    let mut cfg = TrainConfig::desk();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').unwrap_or((arg.as_str(), ""));
        let n = || v.parse::<usize>().expect("numeric value");
        match k {
            "tf_off" => cfg.temporal_filter = false,
            "iters" => cfg.max_iterations = Some(n()),
            "patch" => cfg.patch_size = n(),
            "batch" => cfg.batch_size = n(),
            "cf" => cfg.model.feature_channels = n(),
            "ipe" => cfg.iterations_per_epoch = Some(n()),
            "frames" => cfg.n_frames = n(),
            "epochs" => cfg.epochs = n(),
            "lr" => cfg.lr = v.parse().expect("numeric value"),
            _ => panic!("unknown argument {arg}"),
        }
    }
    let clean = translating_texture(&TextureSpec::default())?;
    let noisy = corrupt(&clean, &NoiseSpec::new(NoiseFamily::Gaussian, 25.0, 1)?)?;
    let before = evaluate_sequence(&clean, &noisy)?;
    println!(
        "noisy: {:.2} dB, SSIM {:.4}",
        before.mean_psnr_db, before.mean_ssim
    );

    let start = Instant::now();
    let ds = NoisyDataset::from_sequence(noisy.clone())?;
    let (params, report) = train_with(&ds, &cfg, |e| {
        println!(
            "epoch {:>3} iter {:>5} train {:.6} val {:.6} lr {:.1e} [{:.0}s]",
            e.epoch,
            e.iterations,
            e.train_loss,
            e.val_loss,
            e.lr,
            start.elapsed().as_secs_f64()
        );
    })?;
    let out = denoise_video(&params, &noisy, &report.config.inference_options()?)?;
    let after = evaluate_sequence(&clean, &out)?;
    let floor = (25.0f64 / 255.0).powi(2);
    println!(
        "denoised: {:.2} dB, SSIM {:.4}; train mse / noise floor {:.3}; {:?}; {:.0}s",
        after.mean_psnr_db,
        after.mean_ssim,
        report.final_train_mse / floor,
        report.stop_reason,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
