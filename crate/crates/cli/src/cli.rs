use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use hetvar::StandardizePolicy;

/// Variational Bayes heteroscedastic regression: fitting, greedy mean and
/// variance selection, simulation studies and solution paths.
#[derive(Debug, Parser)]
#[command(name = "hetvar", version, args_override_self = true)]
pub struct Cli {
    /// File of `key = value` lines supplying any flag; the command line wins.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model with all listed columns and write its trace and coefficients.
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Greedy selection of mean and variance predictors.
    #[command(args_override_self = true)]
    Select(SelectArgs),
    /// Draw training and validation sets from a simulation scenario.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Replicated simulate-select-evaluate study.
    #[command(args_override_self = true)]
    Study(StudyArgs),
    /// MSE and PPS of a saved selection result on new data.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
    /// Per-step coefficient snapshots of a saved selection result.
    #[command(args_override_self = true)]
    Paths(PathsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// Mean-model columns, comma separated; default every other column.
    #[arg(long, value_delimiter = ',')]
    pub mean: Vec<String>,
    /// Variance-model columns, comma separated; default every other column.
    #[arg(long, value_delimiter = ',')]
    pub var: Vec<String>,
    /// Do not add intercept columns.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    /// Prior variance of each mean coefficient.
    #[arg(long, default_value_t = 100.0)]
    pub sigma2_beta: f64,
    /// Prior variance of each variance coefficient.
    #[arg(long, default_value_t = 100.0)]
    pub sigma2_alpha: f64,
    /// Update both prior variances under inverse-gamma hyperpriors.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub shrink: bool,
    #[arg(long, default_value_t = 0.01)]
    pub shrink_a: f64,
    #[arg(long, default_value_t = 0.01)]
    pub shrink_b: f64,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Stop when one sweep raises the bound by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub elbo_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_outer_iters: usize,
    /// Constant variance; the variance model is the intercept only.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub homoscedastic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorKind {
    Uniform,
    Bernoulli,
    #[value(alias = "per_predictor")]
    PerPredictor,
    Ebic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Forward only.
    Fvar,
    /// Forward then backward.
    Fbvar,
}

const PI_REQUIRED: [(&str, &str); 3] = [("prior", "bernoulli"), ("prior", "per-predictor"), ("prior", "per_predictor")];

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Model prior.
    #[arg(long, value_enum, default_value = "ebic")]
    pub prior: PriorKind,
    /// Inclusion probability for mean predictors (bernoulli), or a comma list
    /// with one value per non-intercept mean column (per-predictor).
    #[arg(long, value_delimiter = ',', required_if_eq_any = PI_REQUIRED)]
    pub pi_mu: Vec<f64>,
    /// As --pi-mu, for variance predictors.
    #[arg(long, value_delimiter = ',', required_if_eq_any = PI_REQUIRED)]
    pub pi_sigma: Vec<f64>,
    /// Variance predictors must be in the mean model.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true", default_value_t = false)]
    pub restrict: bool,
    #[arg(long, value_enum, default_value = "fbvar")]
    pub method: Method,
    /// Top-ranked candidates refitted before a step gives up.
    #[arg(long, default_value_t = 1)]
    pub max_tries: usize,
    /// Cap on passes per phase.
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Column scaling before the search: none, unit_ss or zscore.
    #[arg(long, default_value = "unit_ss")]
    pub standardize: StandardizePolicy,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Column scaling before the fit: none, unit_ss or zscore.
    #[arg(long, default_value = "none")]
    pub standardize: StandardizePolicy,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Eight predictors, three in the mean and two in the variance.
    SmallP,
    /// Constant variance, five active out of `--p`.
    Sparse,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value = "small-p")]
    pub scenario: Scenario,
    /// Training sample size.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Validation sample size; default equal to --n.
    #[arg(long)]
    pub n_valid: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Number of predictors (sparse scenario).
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PpsKind {
    PlugIn,
    Integrated,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[arg(long, value_enum, default_value = "plug-in")]
    pub pps_mode: PpsKind,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `result.json` written by `select`.
    #[arg(long, value_name = "FILE")]
    pub result: PathBuf,
    /// CSV with the same columns as the training data.
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "plug-in")]
    pub pps_mode: PpsKind,
    /// Metrics CSV; printed to stdout as well.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    /// `result.json` written by `select`.
    #[arg(long, value_name = "FILE")]
    pub result: PathBuf,
    /// Output CSV.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
