//! `interdec`: interaction decompositions, energy matrices and
//! conditional-independence checks from the command line.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Largest number of factors (inputs plus outputs) a command accepts.
pub const FACTOR_CAP: usize = 16;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CAP: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_DISAGREEMENT: u8 = 10;

/// A failure that carries its exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl Exit {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

#[derive(Parser)]
#[command(name = "interdec", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an embedding table into its interaction components.
    Decompose(DecomposeArgs),
    /// Decide a conditional independence relation geometrically and/or from
    /// the distribution.
    CheckCi(CheckCiArgs),
    /// Energy matrix of a model, computed along two independent routes.
    Energy(EnergyArgs),
    /// Sample a distribution or model with prescribed interaction structure.
    Synth(SynthArgs),
    /// Fit a softmax model to a distribution by gradient descent.
    Fit(FitArgs),
    /// Run the token-aligned / permuted / unfactored emergence experiment.
    Emergence(EmergenceArgs),
    /// Norm grids, polytope regularity and analogy residuals.
    Geometry(GeometryArgs),
    /// Validate a report file and print it canonically or as a summary.
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
pub struct DecomposeArgs {
    /// Embedding file.
    #[arg(long)]
    pub input: PathBuf,
    /// Only this component, as 1-based factor indices, e.g. "1,2" or "" for
    /// the mean.
    #[arg(long)]
    pub component: Option<String>,
    /// Include component rows in the report.
    #[arg(long)]
    pub rows: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Per-component norms as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Geometric,
    Oracle,
    Both,
}

#[derive(Args, Serialize)]
pub struct CheckCiArgs {
    /// Model file (embeddings).
    #[arg(
        long,
        conflicts_with = "distribution",
        required_unless_present = "distribution"
    )]
    pub model: Option<PathBuf>,
    /// Distribution file; only the oracle applies.
    #[arg(long)]
    pub distribution: Option<PathBuf>,
    /// Blocks such as "A=x1;B=y2;C=x2,y1"; C defaults to the rest.
    #[arg(long)]
    pub partition: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Both)]
    pub method: MethodArg,
    /// Relative tolerance for vanishing energies and components.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct EnergyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Energy matrix as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct SynthArgs {
    /// Input cardinalities, e.g. "2,2".
    #[arg(long)]
    pub x_shape: String,
    /// Output cardinalities, e.g. "2,3".
    #[arg(long)]
    pub y_shape: String,
    /// Impose this relation.
    #[arg(long, conflicts_with_all = ["allowed"])]
    pub partition: Option<String>,
    /// Generating family over the merged factors, 1-based, e.g. "1,3;2,3;1,2".
    #[arg(long)]
    pub allowed: Option<String>,
    /// Emit a random model of this dimension instead of a distribution.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, env = "INTERDEC_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Where the sampled distribution or model is written.
    #[arg(long)]
    #[serde(skip)]
    pub emit: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Clone)]
pub struct FitFlags {
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub kl_tol: f64,
    #[arg(long, default_value_t = 500)]
    pub record_every: usize,
    #[arg(long, env = "INTERDEC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub distribution: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Where the fitted model is written.
    #[arg(long)]
    #[serde(skip)]
    pub model_out: Option<PathBuf>,
    /// Interaction-share trace as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub trace_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionArg {
    TokenAligned,
    Permuted,
    Unfactored,
    All,
}

#[derive(Args, Serialize)]
pub struct EmergenceArgs {
    #[arg(long, value_enum, default_value_t = ConditionArg::All)]
    pub condition: ConditionArg,
    /// Cardinality of each of z1, z2, z3.
    #[arg(long, default_value_t = 10)]
    pub z_card: usize,
    #[command(flatten)]
    pub fit: FitFlags,
    /// One row per recorded step and condition.
    #[arg(long)]
    #[serde(skip)]
    pub trace_csv: Option<PathBuf>,
    /// Principal-axis coordinates of the projected input embeddings at the
    /// first and last recorded steps.
    #[arg(long)]
    #[serde(skip)]
    pub pca_csv: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["grid", "polytope", "analogy"])))]
pub struct GeometryArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Pairwise-interaction norm grid of a two-factor table.
    #[arg(long)]
    pub grid: bool,
    /// Affine dimension and regularity flags of the vertex polytope.
    #[arg(long)]
    pub polytope: bool,
    /// Four cells "a,b,c,d", each written "v1:v2:..." with values or labels.
    /// Repeatable.
    #[arg(long)]
    pub analogy: Vec<String>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

#[derive(Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Print a short human-readable summary instead of canonical JSON.
    #[arg(long)]
    pub summary: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(exit) = cause.downcast_ref::<Exit>() {
            return exit.code;
        }
        if let Some(e) = cause.downcast_ref::<interdec::Error>() {
            return match e {
                interdec::Error::Divergence { .. } | interdec::Error::LogitOverflow { .. } => {
                    EXIT_NUMERICAL
                }
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INPUT
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::CheckCi(a) => commands::check_ci(a),
        Command::Energy(a) => commands::energy(a),
        Command::Synth(a) => commands::synth(a),
        Command::Fit(a) => commands::fit(a),
        Command::Emergence(a) => commands::emergence(a),
        Command::Geometry(a) => commands::geometry(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
