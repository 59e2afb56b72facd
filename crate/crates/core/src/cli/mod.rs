//! The `sparse-deconv` command line.
//!
//! Every verb resolves its parameters from built-in defaults, an optional
//! `--config` JSON file and explicit flags (in increasing precedence), writes
//! the resolved record to `config-echo.json` in the output directory, and
//! prints a JSON summary on stdout. Failures print
//! `{"error": {"kind", "message"}}` on stderr and exit nonzero.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Parser)]
#[command(name = "sparse-deconv", version, about = "Convex sparse blind deconvolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a Bernoulli-Gaussian source and its blurred observation.
    Gen(GenArgs),
    /// Solve the l1 inverse-filter program on an observation file.
    Solve(SolveArgs),
    /// Phase-transition threshold of a filter `ẽ` or a pair `(a, ã)`.
    Threshold(ThresholdArgs),
    /// Support-expectation landscape values of a filter `ψ`.
    Landscape(LandscapeArgs),
    /// Run the theory invariant suite.
    Selftest(SelftestArgs),
    /// Parameter sweeps writing CSV tables.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Success rate over a (p, s) grid and the fitted boundary per s
    Phase(PhaseArgs),
    /// Solver error against truncation order r for a root-specified blur
    Stability(StabilityArgs),
    /// Error and objective gap under Gaussian or adversarial noise
    Robustness(RobustnessArgs),
    /// Success rate against sample count N for several filter lengths k
    Samples(SamplesArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Bin,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// JSON file with parameter values; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct SolverFlags {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_primal: Option<f64>,
    #[arg(long)]
    pub tol_dual: Option<f64>,
    #[arg(long)]
    pub over_relaxation: Option<f64>,
    #[arg(long)]
    pub polish_every: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Activity probability of the source.
    #[arg(long)]
    pub p: Option<f64>,
    /// Blur by `1/(1 − s z⁻¹)`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Blur by an explicit filter (comma-separated coefficients).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    /// Index of the first coefficient of `--a`.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<i64>,
    /// Observations cover `-T ..= T`.
    #[arg(long = "T")]
    #[serde(rename = "t_half")]
    pub t_half: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Observation window (`.json`, or `.bin` with its sidecar).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Solve over `w` on `-k ..= k`.
    #[arg(long)]
    pub k: Option<usize>,
    /// Explicit support start; requires `--hi`.
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<i64>,
    /// Constraint filter `ã` (default `1`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a_tilde: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_tilde_offset: Option<i64>,
    /// True inverse, for a recovery verdict.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a_inv: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_inv_offset: Option<i64>,
    /// Shorthand for `--a-inv 1,-s`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    /// Recovery threshold.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Write per-iteration diagnostics to `iterates.csv`.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub dump_iterates: bool,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Default, Args, Serialize)]
pub struct BudgetFlags {
    #[arg(long)]
    pub support_cap: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub e_tilde: Option<Vec<f64>>,
    /// Forward filter; `ẽ = ã ⋆ a⁻¹`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a: Option<Vec<f64>>,
    /// Index of the first coefficient of `--e-tilde` or `--a`.
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<i64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub a_tilde: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub a_tilde_offset: Option<i64>,
    /// Bisection width.
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub budget: BudgetFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct LandscapeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub psi: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<i64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Moment order of `V_k`.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<i32>,
    /// Monte Carlo draws.
    #[arg(long)]
    pub samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelftestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub p_values: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub s_values: Option<Vec<f64>>,
    #[arg(long = "T")]
    #[serde(rename = "t_half")]
    pub t_half: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: `SPARSE_DECONV_WORKERS`, else all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    /// Single root: `a = 1 − s z⁻¹`.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub plus_roots: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub minus_roots: Option<Vec<f64>>,
    #[arg(long = "rmin")]
    pub r_min: Option<usize>,
    #[arg(long = "rmax")]
    pub r_max: Option<usize>,
    /// Explicit truncation lengths, overriding `--rmin`/`--rmax`.
    #[arg(long, value_delimiter = ',')]
    pub r_values: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "t_half")]
    pub t_half: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_parser = ["gaussian", "adversarial"])]
    pub kind: Option<String>,
    /// Noise levels `σ` or `η`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "t_half")]
    pub t_half: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SamplesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub k_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub tail_l1: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

/// Machine-readable failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    fn file(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::new(e.kind(), e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new("csv", e.to_string())
    }
}

/// Runs a parsed command; returns the stdout summary.
pub fn execute(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Gen(a) => commands::gen(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Threshold(a) => commands::threshold(&a),
        Command::Landscape(a) => commands::landscape(&a),
        Command::Selftest(a) => commands::selftest(&a),
        Command::Experiment(e) => match e {
            ExperimentCommand::Phase(a) => commands::phase(&a),
            ExperimentCommand::Stability(a) => commands::stability(&a),
            ExperimentCommand::Robustness(a) => commands::robustness(&a),
            ExperimentCommand::Samples(a) => commands::samples(&a),
        },
    }
}

fn report_error(e: &CliError) {
    let body = serde_json::json!({ "error": e });
    eprintln!("{body}");
}

/// Entry point for the binary: parses `args`, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            report_error(&CliError::new("usage", e.to_string().trim_end()));
            return 2;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            // a closed stdout (e.g. piped into `head`) is not a failure
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            0
        }
        Err(e) => {
            report_error(&e);
            1
        }
    }
}
