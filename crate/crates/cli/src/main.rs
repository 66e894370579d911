//! Command-line front end: scenario-driven, deterministic, file-based.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use bribery_game::calibration::FitError;
use bribery_game::dynamic::DynamicError;
use bribery_game::equilibrium::SolveError;
use bribery_game::GameError;

/// Environment variable capping enumeration sizes (matrix cells, game-tree
/// leaves).
pub const MAX_ENUM_VAR: &str = "BRIBERY_MAX_ENUM";
pub const DEFAULT_MAX_ENUM: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("solver: {0}")]
    Solver(#[from] SolveError),
    #[error("dynamic: {0}")]
    Dynamic(#[from] DynamicError),
    #[error("calibration: {0}")]
    Fit(#[from] FitError),
    #[error("{0}")]
    Game(#[from] GameError),
    #[error("enumeration needs {needed} cells, above the bound of {bound} (raise {MAX_ENUM_VAR} to allow it)")]
    SizeBound { needed: u128, bound: u128 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 validation, 3 solver non-convergence, 4 size bound, 1 anything else.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Fit(_) | CliError::Game(_) => 2,
            CliError::Solver(SolveError::Game(_)) => 2,
            CliError::Solver(_) => 3,
            CliError::Dynamic(DynamicError::TreeTooLarge { .. }) => 4,
            CliError::Dynamic(_) => 2,
            CliError::SizeBound { .. } => 4,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bribery",
    version,
    about = "Solve and simulate bribery games in rating systems",
    after_help = "Scenario files are TOML (see scenarios/example1.toml); the name \
                  `example1` always resolves to the bundled duopoly. Outputs are \
                  deterministic functions of the inputs and flags."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file path, or a bundled scenario name (example1)
    #[arg(long)]
    scenario: String,
    /// Directory the output files are written into (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Override the scenario's per-seller caps, e.g. `--caps 3,3`
    #[arg(long)]
    caps: Option<CapsArg>,
}

/// Comma-separated per-seller caps, parsed as one argument.
#[derive(Clone, Debug)]
struct CapsArg(Vec<u32>);

impl std::str::FromStr for CapsArg {
    type Err = String;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        text.split(',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|e| format!("bad cap {part:?}: {e}"))
            })
            .collect::<Result<Vec<u32>, _>>()
            .map(CapsArg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the payoff tensor over all count profiles as CSV
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
        /// Also emit one seller's payoff surface (by seller id)
        #[arg(long)]
        surface: Option<String>,
        /// Tabulate payoffs relative to the initial utility instead of net
        /// utilities
        #[arg(long)]
        payoff: bool,
    },
    /// Compute pure Nash equilibria, elimination survivors, the social
    /// optimum and the over-bribery gap
    Solve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the slot-by-slot market simulation with Poisson arrivals
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the scenario's arrival seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's slot count
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Find the minimal fair-rater cohort making a seller bribery-proof
    Fairness {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit the snowball parameters from a rating,reviews,installs CSV
    Calibrate {
        /// Input CSV with header rating,reviews,installs (blank = missing)
        #[arg(long)]
        input: PathBuf,
        /// Directory the output files are written into (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
}

/// The enumeration bound, from the environment or the default.
fn max_enum() -> Result<u128, CliError> {
    match std::env::var(MAX_ENUM_VAR) {
        Ok(text) => text.parse::<u128>().map_err(|e| {
            CliError::Validation(format!("{MAX_ENUM_VAR}={text:?} is not a number: {e}"))
        }),
        Err(_) => Ok(DEFAULT_MAX_ENUM),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Matrix {
            common,
            surface,
            payoff,
        } => commands::matrix(
            &common.scenario,
            &common.out,
            common.caps.map(|c| c.0),
            surface,
            payoff,
        ),
        Command::Solve { common } => {
            commands::solve(&common.scenario, &common.out, common.caps.map(|c| c.0))
        }
        Command::Simulate {
            common,
            seed,
            slots,
        } => commands::simulate(
            &common.scenario,
            &common.out,
            common.caps.map(|c| c.0),
            seed,
            slots,
        ),
        Command::Fairness { common } => {
            commands::fairness(&common.scenario, &common.out, common.caps.map(|c| c.0))
        }
        Command::Calibrate { input, out } => commands::calibrate(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code())
        }
    }
}
