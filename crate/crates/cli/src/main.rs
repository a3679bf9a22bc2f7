mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcdecomp_core::{FoldScheme, Method, SignalMode};

use config::FrameParams;

/// Shared/channel-specific decomposition of multichannel signals over two
/// wavelet dictionaries.
#[derive(Debug, Parser)]
#[command(name = "mcdecomp", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multichannel group-lasso fit, lambda chosen by cross-validation unless given.
    Fit(FitArgs),
    /// Independent per-channel lasso fits.
    SingleFit(FitArgs),
    /// Simultaneous orthogonal matching pursuit over [Psi Phi].
    Somp(SompArgs),
    /// Row-sparse l1/l2 fit by block coordinate descent over [Psi Phi].
    Bcd(FitArgs),
    /// Cross-validation curve of the multichannel fit.
    Cv(FitArgs),
    /// Writes one synthetic dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Replicated comparison of estimators on a synthetic scenario.
    Benchmark(BenchmarkArgs),
    /// Cuts a long recording into fixed-length windows.
    Segment(SegmentArgs),
    /// Writes a frame's unit-norm synthesis matrix.
    Frame(FrameArgs),
    /// Penalty levels, concentration checks and the oracle inequality.
    Theory {
        #[command(subcommand)]
        check: TheoryCommand,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Low-resonance frame as p,q,s,J.
    #[arg(long)]
    pub low: Option<FrameParams>,
    /// High-resonance frame as p,q,s,J.
    #[arg(long)]
    pub high: Option<FrameParams>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Fixed penalty; cross-validation is skipped when given.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, value_parser = config::parse_fold_scheme)]
    pub fold_scheme: Option<FoldScheme>,
    /// Stop the path this many points past the best CV error (0 = full path).
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// n x K CSV, one channel per column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SompArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Fixed number of atoms; cross-validation is skipped when given.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub max_budget: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_parser = config::parse_fold_scheme)]
    pub fold_scheme: Option<FoldScheme>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Signal-to-noise ratio; `inf` for noiseless data.
    #[arg(long, value_parser = config::parse_snr)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub zero_third_channel: bool,
    #[arg(long, value_parser = config::parse_signal_mode)]
    pub signal_mode: Option<SignalMode>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Replication index of the noise draw.
    #[arg(long, default_value_t = 0)]
    pub replication: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Comma-separated subset of single-c, multi-c, bcd, somp.
    #[arg(long, value_delimiter = ',', value_parser = config::parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long)]
    pub somp_max_budget: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Window length L.
    #[arg(long)]
    pub length: usize,
    /// Offset between window starts; defaults to L.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FrameAction {
    Dump,
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    #[arg(value_enum, default_value = "dump")]
    pub action: FrameAction,
    #[arg(long)]
    pub p: u32,
    #[arg(long)]
    pub q: u32,
    #[arg(long)]
    pub s: u32,
    #[arg(long = "J", alias = "levels")]
    pub levels: u32,
    #[arg(long)]
    pub n: usize,
    /// CSV path; a JSON sidecar is written next to it. Stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// JSON report path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TheoryCommand {
    /// The penalty levels lambda0^alpha, lambda0^beta and lambda0.
    Lambda0 {
        #[command(flatten)]
        args: TheoryArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
        /// Defaults to the size of the low-resonance frame at n.
        #[arg(long)]
        d1: Option<usize>,
        /// Defaults to the size of the high-resonance frame at n.
        #[arg(long)]
        d2: Option<usize>,
    },
    /// Monte Carlo frequency of a concentration event.
    Proposition {
        #[command(flatten)]
        args: TheoryArgs,
        /// 1: shared maximum, 2: group maximum, 3: bilinear bound.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        channels: Option<usize>,
    },
    /// Oracle inequality over synthetic replications fitted at lambda = 2 lambda0.
    Oracle {
        #[command(flatten)]
        args: TheoryArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        phi_samples: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
