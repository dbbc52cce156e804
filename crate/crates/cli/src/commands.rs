use std::path::{Path, PathBuf};

use serde::Serialize;
use tempoden_core::io::{
    load_checkpoint, read_sequence, save_checkpoint, write_atomic, write_sequence, Encoding,
};
use tempoden_core::metrics::{evaluate_sequence, ScoreReport};
use tempoden_core::model::{denoise_video, InferenceOptions};
use tempoden_core::noise::{materialize, NoiseFamily, NoiseSpec};
use tempoden_core::synth::{translating_texture, TextureSpec};
use tempoden_core::tensor::OpKind;
use tempoden_core::trainer::{
    ablate_conditions, train_with, AblationMode, AblationReport, Condition, NoisyDataset,
    TrainConfig, DEFAULT_FPS, TOOL_VERSION,
};
use tempoden_core::verify::{gradient_suite, Precision, SuiteEntry};
use tempoden_core::Error;

use crate::config::RunConfig;
use crate::{
    AblateArgs, Cli, CliError, Command, CorruptArgs, DenoiseArgs, EncodingArg, EvaluateArgs,
    GradcheckArgs, ModeArg, NoiseArg, SynthArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

/// Common shape of every JSON report the tool writes.
#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool_version: &'static str,
    command: &'static str,
    config: &'a C,
    result: &'a R,
}

fn envelope<'a, C: Serialize, R: Serialize>(
    command: &'static str,
    config: &'a C,
    result: &'a R,
) -> Envelope<'a, C, R> {
    Envelope {
        tool_version: TOOL_VERSION,
        command,
        config,
        result,
    }
}

fn to_json(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)
        .map_err(|e| CliError::Check(format!("report encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `v` to `path`, or prints it when no path is given.
fn emit_json(path: Option<&Path>, v: &impl Serialize) -> Result<()> {
    let text = to_json(v)?;
    match path {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(())
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "missing {what}: pass the flag or set it under `paths` in --config"
        ))
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let det = cli.deterministic;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Corrupt(a) => corrupt(a),
        Command::Train(a) => train(a, det),
        Command::Denoise(a) => denoise(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a, det),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = TextureSpec {
        frames: a.frames,
        height: a.height,
        width: a.width,
        channels: a.channels,
        velocity: (a.vy, a.vx),
        seed: a.seed,
        ..TextureSpec::default()
    };
    let seq = translating_texture(&spec)?;
    let manifest = write_sequence(&seq, &a.out, Encoding::U8, None)?;
    println!("{}", manifest.display());
    Ok(())
}

fn corrupt(a: CorruptArgs) -> Result<()> {
    let family = match a.noise {
        NoiseArg::Gaussian => NoiseFamily::Gaussian,
        NoiseArg::Poisson => NoiseFamily::Poisson,
        NoiseArg::Impulse => NoiseFamily::Impulse,
    };
    let spec = NoiseSpec::new(family, a.level, a.seed)?;
    let clean = read_sequence(&a.clean)?;
    let manifest = materialize(&clean, &spec, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn load_run_config(
    path: Option<&Path>,
    seed: Option<u64>,
    deterministic: bool,
) -> Result<RunConfig> {
    // a malformed or misspelled config is a usage problem; a missing one is I/O
    let mut rc = RunConfig::load_or_default(path).map_err(|e| match e {
        Error::Format { .. } => CliError::Usage(e.to_string()),
        other => CliError::Core(other),
    })?;
    if let Some(s) = seed {
        rc.train.seed = s;
    }
    if deterministic {
        rc.train.deterministic = true;
    }
    Ok(rc)
}

fn train(a: TrainArgs, deterministic: bool) -> Result<()> {
    let mut rc = load_run_config(a.config.as_deref(), a.seed, deterministic)?;
    let noisy = required(a.noisy, &rc.paths.noisy, "noisy sequence (--noisy)")?;
    let out = required(a.out, &rc.paths.checkpoint, "checkpoint path (--out)")?;
    let report_path = a.report.or_else(|| rc.paths.report.clone());

    let ds = NoisyDataset::load(&noisy)?;
    let (params, report) = train_with(&ds, &rc.train, |e| {
        eprintln!(
            "epoch {:>3}  iter {:>6}  train {:.6}  val {:.6}  lr {:.3e}",
            e.epoch, e.iterations, e.train_loss, e.val_loss, e.lr
        );
    })?;
    save_checkpoint(&params, &report, &out)?;

    rc.train = report.config.clone();
    rc.paths.noisy = Some(noisy);
    rc.paths.checkpoint = Some(out.clone());
    rc.paths.report = report_path.clone();
    if let Some(p) = &report_path {
        emit_json(Some(p), &envelope("train", &rc, &report))?;
    }
    println!("{}", out.display());
    Ok(())
}

/// Inference settings recorded in a checkpoint's training report.
fn checkpoint_options(report: &serde_json::Value, n_frames: usize) -> Result<InferenceOptions> {
    match report
        .get("config")
        .cloned()
        .map(serde_json::from_value::<TrainConfig>)
    {
        Some(Ok(cfg)) => Ok(cfg.inference_options()?),
        _ => Ok(InferenceOptions::for_arch(n_frames)?),
    }
}

fn denoise(a: DenoiseArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let opts = checkpoint_options(&ckpt.report, ckpt.params.arch.n_frames)?;
    let noisy = read_sequence(&a.noisy)?;
    let out = denoise_video(&ckpt.params, &noisy, &opts)?;
    let encoding = match a.encoding {
        EncodingArg::F32raw => Encoding::F32Raw,
        EncodingArg::U8 => Encoding::U8,
    };
    let manifest = write_sequence(&out, &a.out, encoding, None)?;
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateConfig<'a> {
    clean: &'a Path,
    test: &'a Path,
}

fn score_table(r: &ScoreReport) -> String {
    let mut s = format!("{:>6}  {:>8}  {:>6}\n", "frame", "PSNR", "SSIM");
    let db = |v: f64| {
        if v.is_infinite() {
            "inf".to_string()
        } else {
            format!("{v:.2}")
        }
    };
    for f in &r.frames {
        s += &format!(
            "{:>6}  {:>8}  {:>6.4}\n",
            f.frame_index,
            db(f.psnr_db),
            f.ssim
        );
    }
    s += &format!(
        "{:>6}  {:>8}  {:>6.4}\n",
        "mean",
        db(r.mean_psnr_db),
        r.mean_ssim
    );
    s
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let clean = read_sequence(&a.clean)?;
    let test = read_sequence(&a.test)?;
    let score = evaluate_sequence(&clean, &test)?;
    let cfg = EvaluateConfig {
        clean: &a.clean,
        test: &a.test,
    };
    let env = envelope("evaluate", &cfg, &score);
    if a.table {
        print!("{}", score_table(&score));
        if let Some(p) = &a.report {
            emit_json(Some(p), &env)?;
        }
        return Ok(());
    }
    emit_json(a.report.as_deref(), &env)
}

fn ablate(a: AblateArgs, deterministic: bool) -> Result<()> {
    let mut rc = load_run_config(a.config.as_deref(), a.seed, deterministic)?;
    let noisy_path = required(a.noisy, &rc.paths.noisy, "noisy sequence (--noisy)")?;
    let clean_path = required(a.clean, &rc.paths.clean, "clean reference (--clean)")?;
    let report_path = a.report.or_else(|| rc.paths.report.clone());

    let ds = NoisyDataset::load(&noisy_path)?;
    let clean = read_sequence(&clean_path)?;
    let mode = match a.mode {
        ModeArg::Tf => AblationMode::Tf,
        ModeArg::Frames => AblationMode::Frames,
        ModeArg::Stride => AblationMode::Stride,
    };
    let fps = ds.sequence().fps.or(clean.fps).unwrap_or(DEFAULT_FPS);
    let mut conds = mode.conditions(&rc.train, fps);
    if let Some(only) = &a.only {
        let key = |c: &Condition| match mode {
            AblationMode::Stride => c.stride,
            _ => c.n_frames,
        };
        if mode == AblationMode::Tf {
            return Err(CliError::Usage(
                "--only applies to frames and stride modes".into(),
            ));
        }
        if let Some(v) = only.iter().find(|v| !conds.iter().any(|c| key(c) == **v)) {
            return Err(CliError::Usage(format!(
                "{v} is not part of the {mode:?} sweep"
            )));
        }
        conds.retain(|c| only.contains(&key(c)));
    }

    let mut report: Option<AblationReport> = None;
    for c in &conds {
        eprintln!("condition {}", c.label);
        let r = ablate_conditions(&ds, &clean, &rc.train, std::slice::from_ref(c))?;
        report = Some(match report {
            None => r,
            Some(mut acc) => {
                acc.rows.extend(r.rows);
                acc
            }
        });
    }
    let mut report = report.ok_or_else(|| CliError::Usage("empty sweep".into()))?;
    report.mode = Some(mode);

    rc.paths.noisy = Some(noisy_path);
    rc.paths.clean = Some(clean_path);
    rc.paths.report = report_path.clone();
    let env = envelope("ablate", &rc, &report);
    if a.table {
        print!("{}", report.render_table());
        if let Some(p) = &report_path {
            emit_json(Some(p), &env)?;
        }
        return Ok(());
    }
    emit_json(report_path.as_deref(), &env)
}

#[derive(Serialize)]
struct GradcheckConfig {
    seed: u64,
    fault: Option<String>,
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let fault = match &a.inject_fault {
        None => None,
        Some(name) => Some(
            OpKind::from_name(name)
                .ok_or_else(|| CliError::Usage(format!("unknown op {name:?}")))?,
        ),
    };
    let entries = gradient_suite(a.seed, fault)?;

    let mut ops: Vec<&str> = Vec::new();
    for e in &entries {
        if !ops.contains(&e.op.as_str()) {
            ops.push(&e.op);
        }
    }
    let find = |op: &str, p: Precision| entries.iter().find(|e| e.op == op && e.precision == p);
    let cell =
        |e: Option<&SuiteEntry>| e.map_or("-".to_string(), |e| format!("{:.3e}", e.max_rel_error));
    println!("{:<10}  {:>10}  {:>10}  status", "op", "f32", "f64");
    for op in &ops {
        let (a32, a64) = (find(op, Precision::F32), find(op, Precision::F64));
        let ok = [a32, a64].iter().all(|e| e.is_some_and(|e| e.passed));
        println!(
            "{op:<10}  {:>10}  {:>10}  {}",
            cell(a32),
            cell(a64),
            if ok { "ok" } else { "FAIL" }
        );
    }

    let cfg = GradcheckConfig {
        seed: a.seed,
        fault: a.inject_fault.clone(),
    };
    if let Some(p) = &a.report {
        emit_json(Some(p), &envelope("gradcheck", &cfg, &entries))?;
    }
    let failed = entries.iter().filter(|e| !e.passed).count();
    if failed > 0 {
        return Err(CliError::Check(format!(
            "{failed} of {} gradient checks failed",
            entries.len()
        )));
    }
    Ok(())
}
