//! Acceptance checks, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). Any positional argument
//! restricts the run to checks whose name contains it.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempoden_core::io::{self, pnm, read_sequence, write_sequence, Encoding};
use tempoden_core::metrics::{psnr, ssim};
use tempoden_core::model::{
    denoise_frame, denoise_video, Arch, InferenceOptions, ModelParams, TemporalKernel,
};
use tempoden_core::noise::{
    add_gaussian, add_impulse, add_poisson, corrupt, NoiseFamily, NoiseSpec,
};
use tempoden_core::synth::{translating_texture, TextureSpec};
use tempoden_core::tensor::{Shape, Tensor};
use tempoden_core::trainer::{
    ablate_conditions, train, AblationMode, AblationRow, NoisyDataset, TrainConfig,
};
use tempoden_core::verify::gradient_suite;
use tempoden_core::FrameSequence;

type Outcome = Result<String, String>;
type CheckFn = fn() -> Outcome;
type RunBytes = (Vec<u8>, Vec<(String, Vec<u8>)>, String);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!(
            "{what} took {:.1}s, limit {limit_s}s",
            elapsed.as_secs_f64()
        )
    })
}

fn e2s(e: tempoden_core::Error) -> String {
    e.to_string()
}

fn random_frames(len: usize, shape: Shape, rng: &mut ChaCha8Rng) -> FrameSequence {
    let frames = (0..len)
        .map(|_| {
            let data = (0..shape.numel()).map(|_| rng.random::<f32>()).collect();
            Tensor::from_vec(shape, data).unwrap()
        })
        .collect();
    FrameSequence::new(frames, 32).unwrap()
}

fn blind_spot() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let n = [3, 5, 7][rng.random_range(0..3)];
        let c = [1, 3][rng.random_range(0..2)];
        let arch = Arch {
            n_frames: n,
            image_channels: c,
            feature_channels: rng.random_range(1..4),
            out_channels: c,
            encoder_width: rng.random_range(2..7),
            bottleneck_width: rng.random_range(2..7),
            decoder_width: rng.random_range(2..7),
            head_widths: [rng.random_range(2..9), rng.random_range(2..9)],
        };
        let params = ModelParams::<f32>::init(&arch, rng.random()).map_err(e2s)?;
        let shape = Shape::new(1, c, rng.random_range(6..22), rng.random_range(6..22));
        let len = rng.random_range(2..12);
        let t = rng.random_range(0..len);
        let stride = rng.random_range(1..3);
        let seq = random_frames(len, shape, &mut rng);
        let mut swapped = seq.clone();
        for v in swapped.frame_mut(t).data_mut() {
            *v = rng.random_range(-50.0..50.0);
        }
        let opts = InferenceOptions {
            kernel: Some(TemporalKernel::new(n).map_err(e2s)?),
            stride,
        };
        let a = denoise_frame(&params, &seq, t, &opts).map_err(e2s)?;
        let b = denoise_frame(&params, &swapped, t, &opts).map_err(e2s)?;
        let same = a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        ensure(same, || {
            format!("case {case}: output moved (N={n}, t={t}/{len}, {shape})")
        })?;
    }
    within(start.elapsed(), 10.0, "50 cases")?;
    Ok(format!(
        "50/50 bit-identical, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn kernel_table() -> Outcome {
    let start = Instant::now();
    let want = [1.0f32, 2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    let got = TemporalKernel::new(7).map_err(e2s)?.weights_f32();
    for (i, (&g, &w)) in got.iter().zip(&want).enumerate() {
        let ulps = (g.to_bits() as i64 - w.to_bits() as i64).abs();
        ensure(ulps <= 1, || format!("gamma[{i}] = {g}, expected {w}"))?;
    }
    for m in (3..=15).step_by(2) {
        let k = TemporalKernel::new(m).map_err(e2s)?;
        let w = k.weights();
        ensure(w.len() == m, || format!("M={m}: length {}", w.len()))?;
        ensure(w[k.center()] == 0.0, || {
            format!("M={m}: centre {}", w[k.center()])
        })?;
        ensure(w[0] == 1.0 && w[m - 1] == 1.0, || {
            format!("M={m}: endpoints")
        })?;
        ensure((0..m).all(|i| w[i] == w[m - 1 - i]), || {
            format!("M={m}: asymmetric")
        })?;
    }
    within(start.elapsed(), 1.0, "kernel checks")?;
    Ok(format!("{got:?}"))
}

fn gradient() -> Outcome {
    let start = Instant::now();
    let entries = gradient_suite(0, None).map_err(e2s)?;
    let bad: Vec<String> = entries
        .iter()
        .filter(|e| !e.passed)
        .map(|e| format!("{} {} {:.2e}", e.op, e.precision.name(), e.max_rel_error))
        .collect();
    ensure(bad.is_empty(), || bad.join(", "))?;
    within(start.elapsed(), 120.0, "suite")?;
    let worst = |p: &str| {
        entries
            .iter()
            .filter(|e| e.precision.name() == p)
            .map(|e| e.max_rel_error)
            .fold(0.0, f64::max)
    };
    Ok(format!(
        "{} checks, worst f32 {:.1e}, worst f64 {:.1e}, {:.0}s",
        entries.len(),
        worst("f32"),
        worst("f64"),
        start.elapsed().as_secs_f64()
    ))
}

fn mean_var(v: &[f32]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = v.iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
    (m, var)
}

fn noise_oracles() -> Outcome {
    let start = Instant::now();
    let shape = Shape::new(1, 1, 1000, 1000);
    let flat = Tensor::full(shape, 0.5f32);

    let sigma = 25.0;
    let g = add_gaussian(&flat, sigma, 11, 0).map_err(e2s)?;
    let (_, var) = mean_var(g.data());
    let sd = var.sqrt();
    ensure((sd - sigma / 255.0).abs() <= 0.5 / 255.0, || {
        format!("gaussian sd {sd}")
    })?;

    let (x, lambda) = (0.4, 30.0);
    let p = add_poisson(&Tensor::full(shape, x as f32), lambda, 12, 0).map_err(e2s)?;
    let (m, var) = mean_var(p.data());
    ensure((m - x).abs() <= 0.003, || format!("poisson mean {m}"))?;
    let want = x / lambda;
    ensure((var - want).abs() <= 0.1 * want, || {
        format!("poisson var {var}, want {want}")
    })?;

    let alpha = 0.2;
    let s = add_impulse(&flat, alpha, 13, 0).map_err(e2s)?;
    let hit = s.data().iter().filter(|&&v| v != 0.5).count() as f64 / 1e6;
    ensure((hit - alpha).abs() <= 0.01, || {
        format!("impulse fraction {hit}")
    })?;

    within(start.elapsed(), 30.0, "noise oracles")?;
    Ok(format!(
        "sd*255 {:.3}, poisson mean {m:.4} var {var:.5}, impulse {hit:.4}",
        sd * 255.0
    ))
}

fn metric_oracles() -> Outcome {
    let shape = Shape::new(1, 1, 32, 32);
    let a = Tensor::full(shape, 100.0f32);
    let b = Tensor::full(shape, 110.0f32);
    let p = psnr(&a, &b, 255.0).map_err(e2s)?;
    ensure((p - 28.1308).abs() < 1e-3, || {
        format!("uniform-diff PSNR {p}")
    })?;

    // scaling the error by 1/sqrt(2) halves the MSE
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r: Vec<f32> = (0..shape.numel())
        .map(|_| rng.random_range(0.0..255.0))
        .collect();
    let e: Vec<f32> = (0..shape.numel())
        .map(|_| rng.random_range(-8.0..8.0))
        .collect();
    let reference = Tensor::from_vec(shape, r.clone()).unwrap();
    let t1 = Tensor::from_vec(shape, r.iter().zip(&e).map(|(x, d)| x + d).collect()).unwrap();
    let t2 = Tensor::from_vec(
        shape,
        r.iter().zip(&e).map(|(x, d)| x + d / 2f32.sqrt()).collect(),
    )
    .unwrap();
    let gain =
        psnr(&reference, &t2, 255.0).map_err(e2s)? - psnr(&reference, &t1, 255.0).map_err(e2s)?;
    ensure((gain - 3.0103).abs() < 1e-3, || {
        format!("halving gain {gain}")
    })?;

    let s = ssim(&a, &b, 255.0).map_err(e2s)?;
    ensure((s - 0.9955).abs() < 1e-3, || {
        format!("constant-image SSIM {s}")
    })?;
    let same = ssim(&reference, &reference, 255.0).map_err(e2s)?;
    ensure(same == 1.0, || format!("SSIM(x,x) = {same}"))?;
    Ok(format!(
        "PSNR {p:.4}, halving +{gain:.4} dB, SSIM {s:.4}, SSIM(x,x) {same}"
    ))
}

/// The synthetic desk-scale task: 60 frames of 64x64 texture, Gaussian σ 25.
struct DeskData {
    clean: FrameSequence,
    noisy: NoisyDataset,
}

const SIGMA: f64 = 25.0;

fn desk_data() -> Result<DeskData, String> {
    let clean = translating_texture(&TextureSpec::default()).map_err(e2s)?;
    let spec = NoiseSpec::new(NoiseFamily::Gaussian, SIGMA, 1).map_err(e2s)?;
    let noisy = NoisyDataset::from_sequence(corrupt(&clean, &spec).map_err(e2s)?).map_err(e2s)?;
    Ok(DeskData { clean, noisy })
}

fn run_condition(
    d: &DeskData,
    cfg: &TrainConfig,
    mode: AblationMode,
    label: &str,
) -> Result<(AblationRow, f64, f64, f64), String> {
    let cond = mode
        .conditions(cfg, 120.0)
        .into_iter()
        .find(|c| c.label == label)
        .ok_or_else(|| format!("no condition {label}"))?;
    let start = Instant::now();
    let r = ablate_conditions(&d.noisy, &d.clean, cfg, &[cond]).map_err(e2s)?;
    let secs = start.elapsed().as_secs_f64();
    let row = r.rows.into_iter().next().ok_or("no row")?;
    Ok((row, r.noisy_psnr_db, r.noisy_ssim, secs))
}

/// Gain and TF-ablation checks share one TF-on training run.
fn desk_runs(only: &dyn Fn(&str) -> bool) -> Vec<(&'static str, Outcome)> {
    let gain_name = "desk-scale denoising gain";
    let tf_name = "temporal-filter ablation direction";
    let (want_gain, want_tf) = (only(gain_name), only(tf_name));
    if !want_gain && !want_tf {
        return Vec::new();
    }
    let d = match desk_data() {
        Ok(d) => d,
        Err(e) => return vec![(gain_name, Err(e.clone())), (tf_name, Err(e))],
    };
    let cfg = TrainConfig::desk();
    let floor = (SIGMA / 255.0).powi(2);
    let on = run_condition(&d, &cfg, AblationMode::Tf, "G+TF+D");
    let mut out = Vec::new();
    if want_gain {
        let r = on.clone().and_then(|(row, np, ns, secs)| {
            let it = row.train.iterations;
            ensure(it <= 5000, || format!("{it} iterations"))?;
            ensure(secs <= 900.0, || format!("{secs:.0}s"))?;
            ensure(row.psnr_db >= np + 3.0, || {
                format!("PSNR {:.2} vs noisy {np:.2}", row.psnr_db)
            })?;
            ensure(row.ssim >= ns + 0.1, || {
                format!("SSIM {:.4} vs noisy {ns:.4}", row.ssim)
            })?;
            Ok(format!(
                "noisy {np:.2} dB / {ns:.4} -> {:.2} dB / {:.4}, {it} iterations, {secs:.0}s",
                row.psnr_db, row.ssim
            ))
        });
        out.push((gain_name, r));
    }
    if want_tf {
        let r = on.and_then(|(on_row, _, _, on_secs)| {
            let (off_row, _, _, off_secs) = run_condition(&d, &cfg, AblationMode::Tf, "G+D")?;
            let total = on_secs + off_secs;
            let gap = on_row.psnr_db - off_row.psnr_db;
            let on_ratio = on_row.train.final_train_mse / floor;
            let off_ratio = off_row.train.final_train_mse / floor;
            ensure(gap >= 2.0, || format!("TF-on {:.2} vs TF-off {:.2} dB", on_row.psnr_db, off_row.psnr_db))?;
            ensure(off_ratio < 0.25, || format!("TF-off train MSE {off_ratio:.3} x floor"))?;
            ensure(on_ratio >= 0.9, || format!("TF-on train MSE {on_ratio:.3} x floor"))?;
            ensure(total < 1800.0, || format!("{total:.0}s"))?;
            Ok(format!(
                "G+TF+D {:.2} dB vs G+D {:.2} dB; train MSE/floor on {on_ratio:.3}, off {off_ratio:.3}; {total:.0}s",
                on_row.psnr_db, off_row.psnr_db
            ))
        });
        out.push((tf_name, r));
    }
    out
}

fn window_ablation() -> Outcome {
    let d = desk_data()?;
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::desk()
    };
    let conds: Vec<_> = AblationMode::Frames
        .conditions(&cfg, 120.0)
        .into_iter()
        .filter(|c| [3, 5, 7].contains(&c.n_frames))
        .collect();
    let report = ablate_conditions(&d.noisy, &d.clean, &cfg, &conds).map_err(e2s)?;
    ensure(report.rows.len() == 3, || {
        format!("{} rows", report.rows.len())
    })?;
    for r in &report.rows {
        ensure(r.psnr_db.is_finite() && r.ssim.is_finite(), || {
            format!("{}: non-finite score", r.condition.label)
        })?;
        ensure(r.train.config.n_frames == r.condition.n_frames, || {
            format!("{}: trained wrong N", r.condition.label)
        })?;
    }
    let table = report.render_table();
    ensure(
        ["N=3", "N=5", "N=7"].iter().all(|l| table.contains(l)),
        || table.clone(),
    )?;
    serde_json::to_string(&report).map_err(|e| e.to_string())?;
    Ok(report
        .rows
        .iter()
        .map(|r| format!("{} {:.2} dB / {:.4}", r.condition.label, r.psnr_db, r.ssim))
        .collect::<Vec<_>>()
        .join(", "))
}

fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig {
        n_frames: 3,
        patch_size: 16,
        batch_size: 2,
        epochs: 3,
        iterations_per_epoch: Some(3),
        ..TrainConfig::default()
    };
    c.model.feature_channels = 2;
    c.model.encoder_width = 6;
    c.model.bottleneck_width = 6;
    c.model.decoder_width = 6;
    c.model.head_widths = [8, 6];
    c
}

fn files_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn determinism() -> Outcome {
    let clean = translating_texture(&TextureSpec {
        frames: 12,
        height: 24,
        width: 28,
        ..TextureSpec::default()
    })
    .map_err(e2s)?;
    let noisy = corrupt(
        &clean,
        &NoiseSpec::new(NoiseFamily::Gaussian, 20.0, 4).map_err(e2s)?,
    )
    .map_err(e2s)?;
    let ds = NoisyDataset::from_sequence(noisy.clone()).map_err(e2s)?;
    let cfg = tiny_config();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<RunBytes, String> {
        let (params, report) = train(&ds, &cfg).map_err(e2s)?;
        let ckpt = tmp.path().join(format!("{tag}.ckpt"));
        io::save_checkpoint(&params, &report, &ckpt).map_err(e2s)?;
        let out = denoise_video(
            &params,
            &noisy,
            &report.config.inference_options().map_err(e2s)?,
        )
        .map_err(e2s)?;
        let dir = tmp.path().join(tag);
        write_sequence(&out, &dir, Encoding::F32Raw, None).map_err(e2s)?;
        let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        Ok((
            fs::read(&ckpt).map_err(|e| e.to_string())?,
            files_of(&dir),
            json,
        ))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a.0 == b.0, || "checkpoints differ".into())?;
    ensure(a.1 == b.1, || "denoised frames differ".into())?;
    ensure(a.2 == b.2, || "reports differ".into())?;
    Ok(format!(
        "checkpoint {} bytes, {} frame files, report {} bytes identical",
        a.0.len(),
        a.1.len(),
        a.2.len()
    ))
}

fn round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = Shape::new(1, 3, 9, 7);
    let frames = (0..4)
        .map(|_| {
            let d = (0..shape.numel())
                .map(|_| rng.random_range(-2.0f32..3.0))
                .collect();
            Tensor::from_vec(shape, d).unwrap()
        })
        .collect();
    let seq = FrameSequence::new(frames, 32).map_err(e2s)?;
    let (d1, d2) = (tmp.path().join("f1"), tmp.path().join("f2"));
    write_sequence(&seq, &d1, Encoding::F32Raw, None).map_err(e2s)?;
    let back = read_sequence(&d1).map_err(e2s)?;
    ensure(back.frames() == seq.frames(), || {
        "f32raw values changed".into()
    })?;
    write_sequence(&back, &d2, Encoding::F32Raw, None).map_err(e2s)?;
    ensure(files_of(&d1) == files_of(&d2), || {
        "f32raw re-save differs".into()
    })?;

    let params =
        ModelParams::<f32>::init(&tiny_config().resolve(1).map_err(e2s)?.model, 3).map_err(e2s)?;
    let report = serde_json::json!({"note": "round trip", "loss": [0.5, 0.25]});
    let (c1, c2) = (tmp.path().join("a.ckpt"), tmp.path().join("b.ckpt"));
    io::save_checkpoint(&params, &report, &c1).map_err(e2s)?;
    let loaded = io::load_checkpoint(&c1).map_err(e2s)?;
    ensure(loaded.params == params, || {
        "checkpoint weights changed".into()
    })?;
    io::save_checkpoint(&loaded.params, &loaded.report, &c2).map_err(e2s)?;
    ensure(fs::read(&c1).unwrap() == fs::read(&c2).unwrap(), || {
        "checkpoint re-save differs".into()
    })?;

    let probes: Vec<f32> = vec![
        -0.3,
        0.0,
        0.5 / 255.0,
        1.5 / 255.0,
        0.2,
        127.5 / 255.0,
        0.999,
        1.0,
        1.7,
    ];
    let t = Tensor::from_vec(Shape::new(1, 1, 1, probes.len()), probes.clone()).unwrap();
    let u8dir = tmp.path().join("u8");
    write_sequence(
        &FrameSequence::new(vec![t], 32).map_err(e2s)?,
        &u8dir,
        Encoding::U8,
        None,
    )
    .map_err(e2s)?;
    let bytes = fs::read(u8dir.join("frame_00000.pgm")).map_err(|e| e.to_string())?;
    let samples = &bytes[bytes.len() - probes.len()..];
    for (&v, &b) in probes.iter().zip(samples) {
        let want = (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8;
        ensure(b == want && pnm::quantize(v) == want, || {
            format!("{v} -> {b}, want {want}")
        })?;
    }
    Ok("f32raw and checkpoint re-saves byte-identical; u8 rounding floor(255v + 0.5)".into())
}

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let only = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let quick: [(&str, CheckFn); 8] = [
        ("blind-spot exactness", blind_spot),
        ("kernel table", kernel_table),
        ("gradient suite", gradient),
        ("noise oracles", noise_oracles),
        ("metric oracles", metric_oracles),
        ("determinism", determinism),
        ("format round-trips", round_trips),
        ("window ablation", window_ablation),
    ];
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let report = |name: &str, r: &Outcome| match r {
        Ok(m) => println!("PASS  {name}: {m}"),
        Err(m) => println!("FAIL  {name}: {m}"),
    };
    for (name, f) in quick {
        if only(name) {
            let r = f();
            report(name, &r);
            results.push((name, r));
        }
    }
    for (name, r) in desk_runs(&only) {
        report(name, &r);
        results.push((name, r));
    }
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
