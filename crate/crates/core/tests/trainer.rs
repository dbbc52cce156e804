use tempoden_core::noise::{corrupt, NoiseFamily, NoiseSpec};
use tempoden_core::synth::{translating_texture, TextureSpec};
use tempoden_core::trainer::{train, NoisyDataset, StopReason, TrainConfig};
use tempoden_core::Error;

fn small_model(mut c: TrainConfig) -> TrainConfig {
    c.model.feature_channels = 4;
    c.model.encoder_width = 12;
    c.model.bottleneck_width = 16;
    c.model.decoder_width = 16;
    c.model.head_widths = [32, 16];
    c
}

fn noisy_texture(frames: usize, size: usize, sigma: f64) -> NoisyDataset {
    let clean = translating_texture(&TextureSpec {
        frames,
        height: size,
        width: size,
        ..TextureSpec::default()
    })
    .unwrap();
    let noisy = corrupt(
        &clean,
        &NoiseSpec::new(NoiseFamily::Gaussian, sigma, 17).unwrap(),
    )
    .unwrap();
    NoisyDataset::from_sequence(noisy).unwrap()
}

#[test]
fn blind_spot_training_stays_above_noise_floor() {
    let sigma = 25.0;
    let ds = noisy_texture(20, 32, sigma);
    let cfg = small_model(TrainConfig {
        n_frames: 3,
        patch_size: 32,
        batch_size: 2,
        epochs: 10,
        iterations_per_epoch: Some(20),
        patience: 100,
        ..TrainConfig::default()
    });
    let (_, report) = train(&ds, &cfg).unwrap();
    assert_eq!(report.iterations, 200);
    let floor = (sigma / 255.0).powi(2);
    assert!(
        report.final_train_mse >= 0.9 * floor,
        "{} < 0.9 * {floor}",
        report.final_train_mse
    );
}

#[test]
fn report_follows_schedule_and_reruns_identically() {
    let ds = noisy_texture(10, 16, 20.0);
    let cfg = small_model(TrainConfig {
        n_frames: 3,
        patch_size: 16,
        batch_size: 2,
        epochs: 4,
        lr_halving_epochs: 2,
        iterations_per_epoch: Some(2),
        patience: 10,
        ..TrainConfig::default()
    });
    let (p1, r1) = train(&ds, &cfg).unwrap();
    let (p2, r2) = train(&ds, &cfg).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(
        serde_json::to_string(&r1).unwrap(),
        serde_json::to_string(&r2).unwrap()
    );
    assert_eq!(r1.lr, vec![1e-3, 1e-3, 5e-4, 5e-4]);
    assert_eq!(r1.epochs_run, 4);
    assert_eq!(r1.iterations, 8);
    assert_eq!(r1.stop_reason, StopReason::Completed);
    assert!(r1.wall_time_s.is_none());
    assert_eq!(r1.config.model.n_frames, 3);
    assert!(r1.best_epoch < 4);
    assert_eq!(r1.best_val_loss, r1.val_loss[r1.best_epoch]);
}

#[test]
fn iteration_budget_stops_training() {
    let ds = noisy_texture(10, 16, 20.0);
    let cfg = small_model(TrainConfig {
        n_frames: 3,
        patch_size: 16,
        batch_size: 1,
        epochs: 5,
        iterations_per_epoch: Some(3),
        max_iterations: Some(4),
        ..TrainConfig::default()
    });
    let (_, r) = train(&ds, &cfg).unwrap();
    assert_eq!(r.iterations, 4);
    assert_eq!(r.epochs_run, 2);
    assert_eq!(r.stop_reason, StopReason::IterationBudget);
}

#[test]
fn patience_zero_stops_at_first_stall() {
    let ds = noisy_texture(10, 16, 20.0);
    let cfg = small_model(TrainConfig {
        n_frames: 3,
        patch_size: 16,
        batch_size: 1,
        epochs: 30,
        lr: 1e-12,
        iterations_per_epoch: Some(1),
        patience: 0,
        ..TrainConfig::default()
    });
    let (_, r) = train(&ds, &cfg).unwrap();
    assert_eq!(r.stop_reason, StopReason::EarlyStop);
    let last = *r.val_loss.last().unwrap();
    assert!(r.val_loss[..r.val_loss.len() - 1]
        .iter()
        .any(|&v| v <= last));
}

#[test]
fn divergence_is_a_numeric_error() {
    let ds = noisy_texture(8, 16, 20.0);
    let cfg = small_model(TrainConfig {
        n_frames: 3,
        patch_size: 16,
        batch_size: 1,
        epochs: 3,
        lr: 1e30,
        iterations_per_epoch: Some(4),
        ..TrainConfig::default()
    });
    match train(&ds, &cfg) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("iteration"), "{msg}"),
        other => panic!("expected a numeric error, got {other:?}"),
    }
}

#[test]
fn oversized_patch_is_rejected() {
    let ds = noisy_texture(6, 16, 20.0);
    let cfg = TrainConfig {
        n_frames: 3,
        patch_size: 20,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&ds, &cfg), Err(Error::InvalidArgument(_))));
}
