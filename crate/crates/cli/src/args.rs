use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Monte Carlo simulation, exact enumeration and statistics for the TRIX
/// clock-distribution grid.
#[derive(Debug, Parser)]
#[command(name = "trix", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a delay or skew distribution (delay-pmf, skew-pmf, oracle-check).
    Simulate(SimulateArgs),
    /// Exact pmf of d(0, H) or of the skew by enumerating every wire assignment.
    Enumerate(EnumerateArgs),
    /// Standard deviation against H or δ (delay-sweep, skew-sweep, delta-sweep).
    Sweep(RunArgs),
    /// Confidence bounds, moments and tail fit of a histogram CSV.
    Analyze(AnalyzeArgs),
    /// Normal QQ transform of a histogram CSV.
    Qq(QqArgs),
    /// Compare RNG algorithms and delay models on the same job.
    CrossValidate(RunArgs),
}

/// Flags shared by the experiment runners. Flags override the config file.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML or JSON config file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub height: Option<u32>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub heights: Option<Vec<u32>>,
    #[arg(long)]
    pub delta: Option<u32>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<u32>>,
    #[arg(long)]
    pub samples: Option<u64>,
    /// Master seed, decimal or 0x-hex. Drawn from the OS when omitted.
    #[arg(long)]
    pub seed: Option<String>,
    /// xoshiro512ss or os.
    #[arg(long)]
    pub rng: Option<String>,
    /// binary, ternary, split:<x*> or const:<w>.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Decay-rate floor for unobserved tail mass in the stddev interval.
    #[arg(long)]
    pub lambda_min: Option<f64>,
    #[arg(long)]
    pub bootstrap_resamples: Option<usize>,
    /// Output directory [default: $TRIX_OUT_DIR, then ./trix-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core. Never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Run jobs above the node-update ceiling anyway.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also dump every node time and wire delay of sample 0.
    #[arg(long)]
    pub record_grid: bool,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub height: u32,
    #[arg(long, default_value = "delay")]
    pub target: String,
    /// Horizontal distance for the skew target.
    #[arg(long, default_value_t = 1)]
    pub delta: u32,
    #[arg(long, default_value = "binary")]
    pub model: String,
    /// Write CSV and JSON here instead of printing the CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Enumerate beyond the assignment limit.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Histogram CSV with a count column, or a rate column and a declared n.
    #[arg(long)]
    pub input: PathBuf,
    /// Sample count for rate files, overriding the file's `n`.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Report the DKW half-width.
    #[arg(long)]
    pub dkw: bool,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Pooled exponential tail fit over |k| in LO,HI.
    #[arg(long, value_delimiter = ',')]
    pub tail_fit: Option<Vec<i64>>,
    #[arg(long, default_value_t = 2.0)]
    pub lambda_min: f64,
    /// Write the histogram with its band and a JSON summary here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QqArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub samples: Option<u64>,
    /// Reference mean [default: the sample mean].
    #[arg(long)]
    pub mu: Option<f64>,
    /// Reference standard deviation [default: the sample stddev].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Write `<input stem>_qq.csv` here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
