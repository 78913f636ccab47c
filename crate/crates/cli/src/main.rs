//! `tidyup`: train preference models, elicit new users, arrange objects and
//! run the evaluation protocols from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tidyup_core::ErrorKind;

#[derive(Debug, Parser)]
#[command(
    name = "tidyup",
    version,
    about = "Learn where people like their things kept, and arrange objects accordingly"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a factor model to a ratings CSV (pair_a,pair_b,user_id,rating).
    Train(TrainArgs),
    /// Solve a new user's profile from probe answers (pair_a,pair_b,rating).
    NewUser(NewUserArgs),
    /// Choose pairs to ask a new user about.
    SelectProbes(SelectProbesArgs),
    /// Predict ratings of pairs for a user profile.
    Predict(PredictArgs),
    /// Group objects into containers for a user.
    Arrange(ArrangeArgs),
    /// Run an evaluation protocol and write its report.
    Eval(EvalArgs),
    /// Generate a synthetic ratings CSV from archetype arrangements.
    Gen(GenArgs),
    /// Serve probing sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Ratings CSV.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Object catalog JSON; by default the objects named in the ratings.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Latent factors per pair and per user.
    #[arg(short = 'k', long, default_value_t = 3)]
    pub k: usize,
    /// Regularization weight.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    /// Relative objective decrease at which training stops.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct NewUserArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Probe answers CSV.
    #[arg(long)]
    pub probes: PathBuf,
    /// Profile file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Regularization weight; defaults to the model's.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// One representative per cluster of pair factor vectors.
    Cluster,
    /// Uniformly random pairs.
    Random,
}

#[derive(Debug, Args)]
pub struct SelectProbesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Number of pairs to choose.
    #[arg(short = 'p', long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Strategy::Cluster)]
    pub strategy: Strategy,
    #[arg(long)]
    pub seed: u64,
    /// CSV of chosen pairs; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    /// CSV of pairs (pair_a,pair_b); every modelled pair when absent.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Ratings CSV to write; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ArrangeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub profile: PathBuf,
    /// Probe answers CSV; these override predictions.
    #[arg(long)]
    pub probes: Option<PathBuf>,
    /// Objects to arrange as a JSON list; the model's objects when absent.
    #[arg(long)]
    pub objects: Option<PathBuf>,
    /// Most containers to use.
    #[arg(short = 'c', long, default_value_t = 6)]
    pub containers: usize,
    /// Category hierarchy (TSV of parent, child); repeat for several experts.
    #[arg(long = "hierarchy")]
    pub hierarchies: Vec<PathBuf>,
    /// Expert configuration JSON, as an alternative to --hierarchy.
    #[arg(long, conflicts_with = "hierarchies")]
    pub experts: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Arrangement file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One of toys, groceries, shelving, incremental, latent.
    #[arg(long)]
    pub protocol: String,
    /// JSON overriding any of the protocol's settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Report file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generation spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Ratings CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Model file; without one every request gets 503.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Default objects for new sessions as a JSON list.
    #[arg(long)]
    pub objects: Option<PathBuf>,
    #[arg(long = "hierarchy")]
    pub hierarchies: Vec<PathBuf>,
    #[arg(long, conflicts_with = "hierarchies")]
    pub experts: Option<PathBuf>,
    /// Session file read at startup and written on shutdown.
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Origin allowed by CORS; any origin when absent.
    #[arg(long)]
    pub allow_origin: Option<String>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_VALIDATION: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_ABSTENTION: u8 = 5;

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<tidyup_core::Error> for Failure {
    fn from(err: tidyup_core::Error) -> Self {
        let code = match err.kind() {
            ErrorKind::Io => EXIT_IO,
            ErrorKind::Validation => EXIT_VALIDATION,
            ErrorKind::Numerical => EXIT_NUMERICAL,
            ErrorKind::Abstention => EXIT_ABSTENTION,
        };
        Self::new(code, err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
