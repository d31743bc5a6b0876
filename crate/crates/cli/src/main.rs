//! `geomech` command-line front end.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geomech_core::GeomError;

#[derive(Parser, Debug)]
#[command(name = "geomech", version, about = "Hamiltonian and Lagrangian mechanics on Darboux charts")]
struct Cli {
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a gradient, Hamiltonian or evolution field.
    Simulate(SimulateArgs),
    /// Classify a subspace of the tangent space at a point.
    Classify(ClassifyArgs),
    /// Reduce a constraint set at a point.
    Reduce(ReduceArgs),
    /// Herglotz and Euler-Lagrange residuals and action criticality of a path.
    Herglotz(HerglotzArgs),
    /// Run the verification battery.
    Verify(VerifyArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_parser = parse_field)]
    pub field: geomech_core::FieldKind,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub t1: f64,
    /// RK4 step, or the initial step with --adaptive.
    #[arg(long, default_value_t = geomech_core::dynamics::DEFAULT_STEP)]
    pub step: f64,
    /// Dormand-Prince with error control instead of fixed-step RK4.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = geomech_core::dynamics::DEFAULT_TOL)]
    pub atol: f64,
    #[arg(long, default_value_t = geomech_core::dynamics::DEFAULT_TOL)]
    pub rtol: f64,
    /// Initial state in chart order, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
    /// Spanning vectors separated by ';', components by ','. Defaults to
    /// the tangent space of the spec's constraints.
    #[arg(long, allow_hyphen_values = true)]
    pub subspace: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct HerglotzArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// CSV with columns t, q1..qn on a uniform grid.
    #[arg(long)]
    pub path: PathBuf,
    /// Value of z at the first node.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub initial_action: f64,
    /// Pass/fail threshold for the Herglotz residual.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// `all` or one of the suite names.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Overridden by GEOMECH_SEED.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_field(s: &str) -> Result<geomech_core::FieldKind, String> {
    s.parse().map_err(|e: GeomError| e.to_string())
}

/// Failures mapped onto exit codes 1 and 2.
#[derive(Debug)]
pub enum CliError {
    Usage { flag: String, message: String },
    Domain(GeomError),
    Io(String),
    ChecksFailed(Vec<String>),
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        CliError::Domain(e)
    }
}

impl CliError {
    pub fn usage(flag: &str, message: impl Into<String>) -> Self {
        CliError::Usage { flag: flag.into(), message: message.into() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 2,
            _ => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match self {
            CliError::Usage { flag, message } => json!({"error": "UsageError", "flag": flag, "message": message}),
            CliError::Domain(e) => json!({"error": e.name(), "message": e.to_string()}),
            CliError::Io(m) => json!({"error": "Io", "message": m}),
            CliError::ChecksFailed(ids) => json!({"error": "ChecksFailed", "message": format!("{} checks failed", ids.len()), "checks": ids}),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let echo: Vec<String> = argv.into_iter().skip(1).collect();
    let result = commands::configure_threads(cli.threads).and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(&a, &echo),
        Command::Classify(a) => commands::classify(&a, &echo),
        Command::Reduce(a) => commands::reduce(&a, &echo),
        Command::Herglotz(a) => commands::herglotz(&a, &echo),
        Command::Verify(a) => commands::verify(&a, &echo),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
