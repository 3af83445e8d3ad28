//! `inharmonica`: bounds, Monte Carlo sweeps and speech analysis for
//! harmonic models of inharmonic signals.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "inharmonica", version, about = "Misspecified-bound toolkit for harmonic models of inharmonic signals")]
pub struct Cli {
    /// Worker threads (0 or unset: all cores).
    #[arg(long, global = true, env = "INHARMONICA_THREADS")]
    pub threads: Option<usize>,

    /// Master seed for every random draw of the subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pseudo-true fundamental and all bounds for one configuration.
    Bounds(BoundsArgs),
    /// Monte Carlo sweep along β, N or SNR; writes figure CSVs and a manifest.
    Sweep(SweepArgs),
    /// Frame-wise analysis of a mono WAV file; writes frame records, ratio CDFs and a manifest.
    Speech(SpeechArgs),
    /// Degeneracy and derivative checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("fundamental").required(true).args(["omega", "f0_hz"]))]
#[command(group = clap::ArgGroup::new("law").required(true).args(["beta", "offsets"]))]
#[command(group = clap::ArgGroup::new("noise").required(true).args(["snr_db", "sigma2"]))]
pub struct BoundsArgs {
    /// Number of harmonics K.
    #[arg(long = "K", value_name = "K", value_parser = clap::value_parser!(u32).range(1..))]
    pub harmonics: u32,
    /// Fundamental in rad/sample.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Fundamental in Hz (needs --fs).
    #[arg(long, requires = "fs")]
    pub f0_hz: Option<f64>,
    /// Sample rate in Hz for --f0-hz.
    #[arg(long)]
    pub fs: Option<f64>,
    /// Stiffness coefficient: ν_k = kω√(1+βk²).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Per-harmonic offsets δ_k (rad/sample): ν_k = kω + δ_k.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets: Option<Vec<f64>>,
    /// Sample count N.
    #[arg(long = "N", value_name = "N")]
    pub samples: usize,
    /// SNR Σr̆²/σ̆² in dB.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Noise variance σ̆².
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Amplitudes r̆_k (default exp(−(k−K/2)²/width)).
    #[arg(long, value_delimiter = ',')]
    pub amplitudes: Option<Vec<f64>>,
    /// Width of the default amplitude profile.
    #[arg(long, default_value_t = 20.0)]
    pub amplitude_width: f64,
    /// Phases φ̆_k (default: uniform draws from --seed, zeros without a seed).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub phases: Option<Vec<f64>>,
    /// Search the whole window [π/N, 2π/K) instead of [0.5ω, 1.5ω].
    #[arg(long)]
    pub full_search: bool,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON report and a manifest into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AxisArg {
    Beta,
    N,
    Snr,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep configuration (JSON), or a manifest from an earlier sweep.
    pub config: Option<PathBuf>,
    /// Sweep axis; resets the axis values unless --values is given.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
    /// Axis values (β, N or SNR dB).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "N", value_name = "N")]
    pub samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    /// Phase draws averaged into the bound curves.
    #[arg(long)]
    pub bound_phase_draws: Option<usize>,
    /// Skip the unstructured estimator.
    #[arg(long)]
    pub no_unstructured: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Output file stem (default: config file stem, or "sweep").
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScopeArg {
    Recording,
    Frame,
}

#[derive(Args, Debug)]
pub struct SpeechArgs {
    /// Mono WAV file (16-bit PCM or 32-bit float).
    pub audio: PathBuf,
    /// Speech configuration (JSON); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Imposed SNRs in dB for the bounds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub snr_db: Option<Vec<f64>>,
    #[arg(long)]
    pub frame_ms: Option<f64>,
    /// Sample count used for the bounds.
    #[arg(long)]
    pub bounds_n: Option<usize>,
    /// Span of the analytic-signal transform.
    #[arg(long, value_enum)]
    pub analytic_scope: Option<ScopeArg>,
    /// Peak threshold above the median periodogram level, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold_db: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Output file stem (default: audio file stem).
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Random parameter points for the derivative check.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}

/// Bad flag values detected after parsing; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Bounds(a) => commands::bounds(&cli, a),
        Command::Sweep(a) => commands::sweep(&cli, a),
        Command::Speech(a) => commands::speech(&cli, a),
        Command::Selftest(a) => commands::selftest(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
