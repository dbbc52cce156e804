//! `tempoden`: corrupt, train, denoise, evaluate, ablate and gradcheck.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O or file format, 3 numeric failure
//! (including a failed gradient check).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tempoden_core::Error;

#[derive(Parser, Debug)]
#[command(name = "tempoden", version, about = "Unsupervised video denoising")]
struct Cli {
    /// Worker threads for training and inference (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Leave wall-clock fields out of reports so reruns are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic clean sequence (a drifting random texture).
    Synth(SynthArgs),
    /// Materialize a fixed-noise copy of a clean sequence.
    Corrupt(CorruptArgs),
    /// Train on a noisy sequence and write a checkpoint.
    Train(TrainArgs),
    /// Denoise every frame of a sequence with a checkpoint.
    Denoise(DenoiseArgs),
    /// Score a sequence against a clean reference.
    Evaluate(EvaluateArgs),
    /// Retrain under each condition of a sweep and score the results.
    Ablate(AblateArgs),
    /// Finite-difference check of every differentiable op.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Vertical motion in pixels per frame.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    vy: f64,
    /// Horizontal motion in pixels per frame.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    vx: f64,
    #[arg(long, env = "TEMPODEN_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Poisson,
    Impulse,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    /// Clean sequence (manifest or frame directory).
    #[arg(long)]
    clean: PathBuf,
    #[arg(long, value_enum)]
    noise: NoiseArg,
    /// Gaussian σ on the 8-bit scale, Poisson peak count, or impulse fraction.
    #[arg(long)]
    level: f64,
    #[arg(long, env = "TEMPODEN_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Noisy sequence; falls back to `paths.noisy` in the config.
    #[arg(long)]
    noisy: Option<PathBuf>,
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to write; falls back to `paths.checkpoint`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the training report here; falls back to `paths.report`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, env = "TEMPODEN_SEED")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodingArg {
    F32raw,
    U8,
}

#[derive(Args, Debug)]
struct DenoiseArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Frame encoding of the output.
    #[arg(long, value_enum, default_value = "f32raw")]
    encoding: EncodingArg,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    clean: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print an aligned per-frame table.
    #[arg(long)]
    table: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Tf,
    Frames,
    Stride,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long)]
    clean: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run only these window lengths (frames mode) or strides (stride mode).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<usize>>,
    #[arg(long, env = "TEMPODEN_SEED")]
    seed: Option<u64>,
    /// Print an aligned comparison table.
    #[arg(long)]
    table: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, env = "TEMPODEN_SEED", default_value_t = 0)]
    seed: u64,
    /// Write every suite entry as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Corrupt one op's backward pass (negative control).
    #[arg(long, hide = true, value_name = "OP")]
    inject_fault: Option<String>,
}

/// Failure with its exit code.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Core(Error),
    /// A check ran to completion and did not pass.
    Check(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => match e {
                Error::InvalidArgument(_) | Error::Shape { .. } => 1,
                Error::Io { .. } | Error::Format { .. } => 2,
                Error::Numeric(_) | Error::NonFinite(_) => 3,
            },
            CliError::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
