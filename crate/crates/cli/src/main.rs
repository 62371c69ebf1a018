//! `dmpt`: continuous and whole-lot mean-variance portfolio construction.
//!
//! Every run records its configuration in a manifest JSON; `--from-manifest`
//! replays one. Result files are deterministic for a given configuration at
//! any `DMPT_THREADS` setting.

mod docs;
mod inputs;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmpt_core::solvers::SamplerChoice;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dmpt", version, about = "Mean-variance portfolios, fractional or in whole lots")]
pub struct Cli {
    /// Replay the configuration recorded in a run manifest.
    #[arg(long, value_name = "FILE")]
    pub from_manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Solve a portfolio selection problem.
    #[command(subcommand)]
    Optimize(OptimizeCommand),
    /// Sample a portfolio cloud and its upper envelope to CSV.
    Frontier(FrontierArgs),
    /// Solve once per value along an axis and tabulate the results.
    Sweep(SweepArgs),
    /// Recompute a result file's numbers from the raw inputs.
    Verify(VerifyArgs),
    /// Generate a synthetic market as price and score CSVs.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
pub enum OptimizeCommand {
    /// Fractional weights on the simplex.
    Continuous(ContinuousArgs),
    /// Whole lots summing to a fixed total.
    Discrete(DiscreteArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    Exhaustive,
    SaInteger,
    SaQubo,
}

impl Sampler {
    pub fn choice(self) -> SamplerChoice {
        match self {
            Sampler::Exhaustive => SamplerChoice::Exhaustive,
            Sampler::SaInteger => SamplerChoice::SaInteger,
            Sampler::SaQubo => SamplerChoice::SaQubo,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    pub fn is_on(self) -> bool {
        matches!(self, Toggle::On)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Ntot,
    EsgDistance,
    Phi,
}

#[derive(Args, Serialize)]
pub struct ContinuousArgs {
    /// Long-format price CSV (date,ticker,close).
    #[arg(long)]
    pub prices: PathBuf,
    /// Comma-separated tickers; defaults to every ticker in the file.
    #[arg(long)]
    pub tickers: Option<String>,
    /// Risk aversion, > 0.
    #[arg(long)]
    pub phi: f64,
    /// Projected-gradient stopping residual.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 252)]
    pub periods_per_year: u32,
    /// Also round the weights into whole lots against this budget.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long, default_value = "continuous_result.json")]
    pub out: PathBuf,
    /// Manifest location; defaults to "<out>.manifest.json".
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct DiscreteArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub tickers: Option<String>,
    /// Risk aversion, > 0; see --rescale-phi for its scale.
    #[arg(long)]
    pub phi: f64,
    #[arg(long, default_value_t = 252)]
    pub periods_per_year: u32,
    #[arg(long, value_enum, default_value_t = Sampler::SaInteger)]
    pub sampler: Sampler,
    /// Total lot count.
    #[arg(long)]
    pub ntot: Option<u64>,
    /// Search for the smallest lot total spending the budget to --slack-tol.
    #[arg(long)]
    pub calibrate: bool,
    #[arg(long, default_value_t = 10.0)]
    pub slack_tol: f64,
    #[arg(long)]
    pub budget: Option<f64>,
    /// Score CSV (ticker,score,best,worst); pairs with --esg-max-distance.
    #[arg(long)]
    pub esg: Option<PathBuf>,
    /// Cap on the portfolio's score distance from the best rating.
    #[arg(long)]
    pub esg_max_distance: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub esg_order: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: u32,
    /// Annealing proposals per restart.
    #[arg(long, default_value_t = 20_000)]
    pub sweeps: u32,
    /// on: --phi is the continuous-scale value, divided by N_tot in lot
    /// space; off: --phi multiplies lot variance directly.
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub rescale_phi: Toggle,
    /// Also report the rounded continuous baseline and both frontier gaps.
    #[arg(long)]
    pub compare_rounding: bool,
    /// Cloud size behind the frontier gaps of --compare-rounding.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "discrete_result.json")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct FrontierArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub tickers: Option<String>,
    #[arg(long, default_value_t = 252)]
    pub periods_per_year: u32,
    #[arg(long, value_enum, default_value_t = Mode::Continuous)]
    pub mode: Mode,
    /// Lot total; required for --mode discrete.
    #[arg(long)]
    pub ntot: Option<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = dmpt_core::frontier::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "cloud.csv")]
    pub out_cloud: PathBuf,
    #[arg(long, default_value = "envelope.csv")]
    pub out_envelope: PathBuf,
    /// Result JSON files to measure against the envelope (repeatable).
    #[arg(long)]
    pub mark: Vec<PathBuf>,
    #[arg(long, default_value = "gaps.csv")]
    pub out_gaps: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub tickers: Option<String>,
    #[arg(long, default_value_t = 252)]
    pub periods_per_year: u32,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated values along the axis.
    #[arg(long)]
    pub values: String,
    /// Risk aversion; fixed for the ntot and esg-distance axes.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Lot total; fixed for the esg-distance and phi axes.
    #[arg(long)]
    pub ntot: Option<u64>,
    #[arg(long, value_enum, default_value_t = Sampler::Exhaustive)]
    pub sampler: Sampler,
    #[arg(long)]
    pub budget: Option<f64>,
    /// Score CSV; required for the esg-distance axis.
    #[arg(long)]
    pub esg: Option<PathBuf>,
    /// Fixed score-distance cap (not valid on the esg-distance axis).
    #[arg(long)]
    pub esg_max_distance: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub esg_order: f64,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    pub rescale_phi: Toggle,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub restarts: u32,
    #[arg(long, default_value_t = 20_000)]
    pub sweeps: u32,
    /// Cloud size behind the frontier-gap column.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct VerifyArgs {
    /// Result JSON written by an optimize run.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long)]
    pub tickers: Option<String>,
    /// Score CSV; required when the result used a score cap.
    #[arg(long)]
    pub esg: Option<PathBuf>,
    #[arg(long, default_value_t = 252)]
    pub periods_per_year: u32,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of assets.
    #[arg(long)]
    pub assets: usize,
    /// Number of trading days.
    #[arg(long, default_value_t = 260)]
    pub rows: usize,
    #[arg(long, default_value = "prices.csv")]
    pub out_prices: PathBuf,
    #[arg(long, default_value = "esg.csv")]
    pub out_esg: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(raw) = std::env::var("DMPT_THREADS") {
        if let Ok(n) = raw.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run::dispatch(argv) {
        Ok(code) => ExitCode::from(code),
        Err(fail) => {
            eprintln!("error: {}", fail.message);
            ExitCode::from(fail.code)
        }
    }
}
