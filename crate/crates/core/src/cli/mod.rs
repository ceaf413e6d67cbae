//! Command-line interface.

mod commands;
pub mod index_spec;
pub mod ingest;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::longrun::KernelKind;
use crate::simulate::{IndexChoice, Structure};

#[derive(Debug, Parser)]
#[command(name = "hdprec", version, about = "Inference on large precision matrices from dependent data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo coverage of the KMB and SKMB quantiles.
    Simulate(SimulateArgs),
    /// Precision matrix estimate and simultaneous intervals.
    Estimate(EstimateArgs),
    /// Sup-norm test of omega_S = c.
    Test(TestArgs),
    /// Support recovery on an index set.
    Recover(EstimateArgs),
    /// Block tests between groups with Benjamini-Hochberg screening.
    Blocks(BlocksArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Qs,
    Bartlett,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Qs => KernelKind::QuadraticSpectral,
            KernelArg::Bartlett => KernelKind::Bartlett,
        }
    }
}

/// `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthArg {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for BandwidthArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(BandwidthArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(BandwidthArg::Fixed(v)),
            _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
        }
    }
}

impl BandwidthArg {
    pub fn value(self) -> Option<f64> {
        match self {
            BandwidthArg::Auto => None,
            BandwidthArg::Fixed(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap draws.
    #[arg(long = "boot-M", value_name = "M")]
    pub boot_m: Option<usize>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Kernel bandwidth, or `auto` for the AR(1) plug-in rule.
    #[arg(long, value_name = "REAL|auto")]
    pub bandwidth: Option<BandwidthArg>,
    #[arg(long)]
    pub studentized: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Multiplier on the default Lasso penalty.
    #[arg(long = "lambda-scale")]
    pub lambda_scale: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Observations CSV: a header of variable names, one row per time point.
    #[arg(long, conflicts_with = "prices", required_unless_present = "prices")]
    pub data: Option<PathBuf>,
    /// Price CSV, converted to standardized log returns.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    /// Use simple instead of log returns with --prices.
    #[arg(long, requires = "prices")]
    pub simple_returns: bool,
    /// Keep returns unstandardized with --prices.
    #[arg(long, requires = "prices")]
    pub no_standardize: bool,
    /// `symbol,group` CSV; `NA` marks symbols without a group.
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StructureArg {
    A,
    B,
}

impl From<StructureArg> for Structure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::A => Structure::A,
            StructureArg::B => Structure::B,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetArg {
    Zeros,
    Offdiag,
}

impl From<SetArg> for IndexChoice {
    fn from(s: SetArg) -> Self {
        match s {
            SetArg::Zeros => IndexChoice::Zeros,
            SetArg::Offdiag => IndexChoice::Offdiag,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, ignore_case = true)]
    pub structure: Option<StructureArg>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Replicates with a bootstrap each.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Samples forming the benchmark distribution.
    #[arg(long = "bench-reps")]
    pub bench_reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    pub sets: Option<Vec<SetArg>>,
    /// Repeat the experiment for lambda scales 0.25, 0.5 and 1.
    #[arg(long = "lambda-sensitivity")]
    pub lambda_sensitivity: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Index set: offdiag, zeros-of <file>, band-outside <k>, pairs <file>, block <h1> <h2>.
    #[arg(long, default_value = "offdiag")]
    pub set: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "offdiag")]
    pub set: String,
    /// Test omega_S = 0.
    #[arg(long, conflicts_with = "null", required_unless_present = "null")]
    pub zero: bool,
    /// Null values as a `j1,j2,value` CSV covering the set.
    #[arg(long)]
    pub null: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BlocksArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// False discovery rate for the step-up screen.
    #[arg(long, default_value_t = 0.1)]
    pub fdr: f64,
    /// Also test within-group blocks.
    #[arg(long)]
    pub within: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Estimate(a) | Command::Recover(a) => &a.common,
            Command::Test(a) => &a.common,
            Command::Blocks(a) => &a.common,
        }
    }
}

/// Runs a parsed command on a pool of `--threads` workers.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.command.common().threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(&cli.command))
}

/// Parses arguments, runs, and maps the outcome to an exit code: 0 on
/// success, 1 for user errors, 2 for internal failures.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(2),
    }
}
