use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "ghl",
    version,
    about = "GLM fitting and grouped goodness-of-fit tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GLM to a CSV file and report the estimates.
    Fit(FitArgs),
    /// Fit a GLM and run goodness-of-fit tests.
    Gof(GofArgs),
    /// Run a simulation study for one named setting.
    Simulate(SimulateArgs),
    /// Mean naive and GHL statistics as the number of parameters grows.
    LargeModelStudy(LargeModelArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// Covariate columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, default_value = "poisson")]
    pub family: String,
    /// Link function (default depends on the family).
    #[arg(long)]
    pub link: Option<String>,
    /// Known dispersion: σ² (normal), shape (gamma), λ (inverse gaussian)
    /// or k (negative binomial).
    #[arg(long)]
    pub dispersion: Option<f64>,
    /// Prepend a constant column (default).
    #[arg(long, overrides_with = "no_intercept")]
    pub intercept: bool,
    #[arg(long = "no-intercept", overrides_with = "intercept")]
    pub no_intercept: bool,
    /// Categorical columns to expand into indicators.
    #[arg(long = "one-hot", value_delimiter = ',')]
    pub one_hot: Vec<String>,
    /// Accept family/link pairs outside the supported table.
    #[arg(long)]
    pub allow_invalid_pair: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GofArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Group counts, e.g. `10,18`.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub groups: Vec<usize>,
    /// variance-weighted, equal-count or fixed:k1,k2,...
    #[arg(long, default_value = "variance-weighted")]
    pub grouping: String,
    /// Tests to run: ghl, naive_ghl, hl_classic, sw.
    #[arg(long, value_delimiter = ',', default_value = "ghl,naive_ghl")]
    pub tests: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Seed for the SW bootstrap.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bootstrap replicates for SW.
    #[arg(long, default_value_t = 1000)]
    pub sw_boot: usize,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Key-value config file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub setting: Option<String>,
    /// Deviation index for power settings 1-3 (fractions like 1/16 allowed).
    #[arg(long)]
    pub j: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of parameters for the large_model setting.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub grouping: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub tests: Option<Vec<String>>,
    #[arg(long)]
    pub sw_boot: Option<usize>,
    /// Evaluate SW on the first N replications only.
    #[arg(long)]
    pub sw_reps: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write a flat per-test rejection table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LargeModelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Parameter counts, e.g. `2,10,20,30,40,50`.
    #[arg(long, value_delimiter = ',')]
    pub ds: Option<Vec<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub grouping: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
