//! `bctm`: fit, predict, score and simulate conditional transformation models
//! from the command line.
//!
//! # Model files
//!
//! A model is a JSON object with a reference distribution (`"normal"`,
//! `"logistic"` or `"mev"`), a list of terms and optional `seed` and
//! `sampler` sections:
//!
//! ```json
//! {
//!   "reference": "normal",
//!   "terms": [
//!     {"name": "base", "response": {"spline": {"num_basis": 10}}, "covariate": "none"},
//!     {"name": "age", "response": "linear", "covariate": {"linear": ["age"]}},
//!     {"name": "site", "response": "intercept", "covariate": {"random_effect": {"column": "site"}},
//!      "hyperprior": {"ig": {"a": 1, "b": 0.001}}},
//!     {"name": "area", "response": "intercept", "covariate": {"spatial": {"column": "region"}},
//!      "hyperprior": {"sd": {"c": 3, "alpha": 0.01}}}
//!   ],
//!   "seed": 1
//! }
//! ```
//!
//! `response` is `"intercept"`, `"linear"` or `{"spline": {"num_basis", "degree"}}`;
//! `covariate` is `"none"`, `{"linear": [columns]}`,
//! `{"spline": {"column", "num_basis", "degree"}}`, `{"random_effect": {"column"}}`
//! or `{"spatial": {"column", "edges"}}`. Spatial edges may be omitted and
//! passed with `--edges` instead.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use bctm::sampler::SamplerConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bctm", version, about = "Bayesian conditional transformation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write posterior draws.
    Fit(FitArgs),
    /// Conditional quantiles and distribution functions for new covariates.
    Predict(PredictArgs),
    /// WAIC and DIC of a fit, and held-out scores for new data.
    Score(ScoreArgs),
    /// Run a simulation experiment.
    Simulate(SimulateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// 4000 iterations, 2000 of them warmup.
    Full,
    /// 1000 iterations, 500 of them warmup.
    Fast,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Total iterations per chain, warmup included.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Adaptation iterations; they are discarded from the output.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
}

impl SamplerArgs {
    /// `base` (or the chosen profile) with the explicit flags applied.
    pub fn apply(&self, base: &SamplerConfig) -> SamplerConfig {
        let mut cfg = match self.profile {
            Some(Profile::Fast) => SamplerConfig::fast(),
            Some(Profile::Full) => SamplerConfig::default(),
            None => base.clone(),
        };
        // a profile only sets the schedule length
        if self.profile.is_some() {
            cfg.seed = base.seed;
            cfg.chains = base.chains;
            cfg.target_accept = base.target_accept;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.chains {
            cfg.chains = c;
        }
        if let Some(w) = self.warmup {
            cfg.warmup = w;
            cfg.burn_in = w;
        }
        if let Some(it) = self.iterations {
            cfg.iterations = it;
        }
        if let Some(t) = self.target_accept {
            cfg.target_accept = t;
        }
        cfg
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Training data (CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Region adjacency as a `region_a,region_b` CSV, used by spatial terms
    /// without edges of their own.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Directory written by `bctm fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Covariates to predict at (CSV); response columns are ignored.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Vec<f64>,
    /// Response grid for the cdf: `lo:hi:n` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub cdf_grid: Option<String>,
    /// Probability content of the credible bounds.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub fit: PathBuf,
    /// Held-out data (CSV) for the log score and CRPS.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Write the scores here as JSON as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub replications: Option<usize>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let argv: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a, &argv),
        Command::Predict(a) => commands::predict(&a, &argv),
        Command::Score(a) => commands::score(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
