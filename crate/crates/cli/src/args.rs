//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "benchcert", version, about = "Audit whether benchmark evidence determines a deployment decision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fiber audit of a candidate table.
    Audit(AuditArgs),
    /// Interval certificates from predictions, error bounds and null radii.
    Certify(CertifyArgs),
    /// Completion curve of a probe pool under a selection policy.
    Complete(CompleteArgs),
    /// Calibration-certified held-out replay.
    Replay(ReplayArgs),
    /// Synthetic response-space experiments.
    Synth(SynthArgs),
    /// Check a locked manifest.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleName {
    Exact,
    Quantile,
    Knn,
    Window,
}

impl RuleName {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleName::Exact => "exact",
            RuleName::Quantile => "quantile",
            RuleName::Knn => "knn",
            RuleName::Window => "window",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    /// Fiber rule.
    #[arg(long, value_enum, default_value = "exact")]
    pub rule: RuleName,
    /// Quantile bins per evidence dimension (quantile rule).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Neighbourhood size including the candidate itself (knn rule).
    #[arg(long)]
    pub k: Option<usize>,
    /// Half-width of the evidence window (window rule).
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Directory for report.json and CSV outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    /// Candidate CSV with `id`, `e_*` evidence and optional `d_label`, `y_star`, `loss_*`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// JSON file overriding column names, kinds and the action alphabet.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Also run quantile audits at each of these resolutions.
    #[arg(long, value_delimiter = ',')]
    pub bins_sweep: Vec<usize>,
    /// Deployment threshold for `y_star` threshold classes.
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Regret tolerance for ε-robust fibers (needs `loss_*` columns).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    /// CSV with `id`, `y_hat`, `delta`, optional `radius` and `y_star`.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Benchmark-null residual norm of the deployment probe.
    #[arg(long)]
    pub g: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: f64,
    /// Radius applied to every candidate when the file has no `radius` column.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Emit certified counts with radii scaled by 0.5 to 2.
    #[arg(long)]
    pub radius_sweep: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    ResidualGreedy,
    Random,
    BenchmarkAligned,
    Uncertainty,
    Diversity,
    Oracle,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::ResidualGreedy => "residual-greedy",
            PolicyName::Random => "random",
            PolicyName::BenchmarkAligned => "benchmark-aligned",
            PolicyName::Uncertainty => "uncertainty",
            PolicyName::Diversity => "diversity",
            PolicyName::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompleteArgs {
    /// Benchmark probes: `id` plus coordinate columns.
    #[arg(long)]
    pub probes: PathBuf,
    /// Deployment probe: one row with `id` plus the same coordinate columns.
    #[arg(long)]
    pub deployment: PathBuf,
    /// Candidate probes: `id`, `cost` plus coordinate columns.
    #[arg(long)]
    pub pool: PathBuf,
    /// Latent candidate states used to compute certified fractions.
    #[arg(long)]
    pub states: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "residual-greedy")]
    pub policy: PolicyName,
    /// Strictly increasing acquisition budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<f64>,
    /// Report the smallest budget certifying at least 1 - epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Benchmark-channel error bound for every state.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Benchmark-null radius for every state.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    Unanimity,
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleName {
    Exact,
    Noisy,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Labelled candidates to split repeatedly into calibration and held-out halves.
    #[arg(long, conflicts_with_all = ["calibration", "heldout"])]
    pub candidates: Option<PathBuf>,
    /// Fixed calibration table (with --heldout).
    #[arg(long, requires = "heldout")]
    pub calibration: Option<PathBuf>,
    #[arg(long, requires = "calibration")]
    pub heldout: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[command(flatten)]
    pub rule: RuleArgs,
    /// Use each split's calibration mean absolute error as the window tolerance.
    #[arg(long)]
    pub window_from_mae: bool,
    #[arg(long)]
    pub splits: Option<usize>,
    /// Calibration fraction of each split.
    #[arg(long)]
    pub frac: Option<f64>,
    #[arg(long, default_value_t = benchcert_core::replay::DEFAULT_MIN_SUPPORT)]
    pub min_support: usize,
    #[arg(long, value_enum, default_value = "unanimity")]
    pub mode: ModeName,
    /// Largest certified discordance bound (clopper-pearson mode).
    #[arg(long)]
    pub tau_bound: Option<f64>,
    /// Confidence parameter of the bound (clopper-pearson mode).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of fibers the confidence level is split across (clopper-pearson mode).
    #[arg(long)]
    pub multiplicity: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    pub oracle: OracleName,
    /// Label flip probability of the noisy oracle.
    #[arg(long)]
    pub flip_rate: Option<f64>,
    #[arg(long)]
    pub cost_fp: Option<f64>,
    #[arg(long)]
    pub cost_fn: Option<f64>,
    #[arg(long)]
    pub cost_acq: Option<f64>,
    /// Number of log-spaced C_FP/C_FN ratios in [0.1, 10] for the break-even sweep.
    #[arg(long)]
    pub cost_sweep: Option<usize>,
    /// Write a hashed manifest of every planned decision before scoring.
    #[arg(long)]
    pub lock: bool,
    /// Timestamp stored inside the locked manifest.
    #[arg(long, requires = "lock")]
    pub timestamp: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Transfer,
    ZeroError,
    Leaderboard,
    Correlation,
    Constrained,
    Completion,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Transfer => "transfer",
            ExperimentName::ZeroError => "zero-error",
            ExperimentName::Leaderboard => "leaderboard",
            ExperimentName::Correlation => "correlation",
            ExperimentName::Constrained => "constrained",
            ExperimentName::Completion => "completion",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub experiment: ExperimentName,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of seeds (seed, seed + 1, ...).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Candidates per seed.
    #[arg(long)]
    pub n_candidates: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Residual norms to sweep.
    #[arg(long, value_delimiter = ',')]
    pub g_grid: Vec<f64>,
    /// Residual norm reported as the headline transfer coverage.
    #[arg(long)]
    pub headline_g: Option<f64>,
    /// Residual norm of the correlation and completion experiments.
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Completion steps per policy.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Half-width of the constraint band.
    #[arg(long)]
    pub band: Option<f64>,
    #[arg(long)]
    pub ambient_bound: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Manifest written by `replay --lock`.
    #[arg(long)]
    pub manifest: PathBuf,
}
