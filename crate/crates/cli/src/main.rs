//! `permanental`: certify inverse M-matrices, tabulate the latent count
//! law, simulate permanental vectors and verify their identities.
//!
//! Exit codes: 0 success, 1 mathematical violation or uncertified input,
//! 2 usage or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use permanental::Error;

mod commands;
mod input;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Math(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Math(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotMMatrix(_)
            | Error::CertificationFailed(_)
            | Error::SingularMatrix
            | Error::NonPositiveDiagonal(_)
            | Error::HypothesisViolated(_)
            | Error::NotSymmetric
            | Error::NotPositiveDefinite
            | Error::NegativeEntry(..) => CliError::Math(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Exact,
    Mc,
    Sym,
}

impl From<SuiteArg> for permanental::Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => Self::All,
            SuiteArg::Exact => Self::Exact,
            SuiteArg::Mc => Self::Mc,
            SuiteArg::Sym => Self::Sym,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "permanental", version, about = "Permanental random vectors from inverse M-matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// Print the JSON schema of report lines and exit.
    #[arg(long)]
    pub schema: bool,

    /// Shape parameter alpha > 0.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub alpha: f64,

    /// Target mass deficit of truncated pmf tables.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub epsilon: f64,

    /// Number of Monte Carlo draws.
    #[arg(long = "n", global = true, default_value_t = 1_000_000)]
    pub n_draws: usize,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for Monte Carlo; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    #[arg(long, global = true, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,

    /// Output file (samples, symmetrized matrix, or failure witness).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a nonsingular M-matrix and print its decomposition.
    Check { path: PathBuf },
    /// Run a verification suite; one report per line.
    Verify { path: PathBuf },
    /// Tabulate P(Z = k) until the missing mass is below epsilon.
    Zpmf { path: PathBuf },
    /// alpha-permanent of the matrix, or of its expansion C(k).
    Perm {
        path: PathBuf,
        /// Comma-separated multiplicities, e.g. 0,2,3.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<u32>>,
    },
    /// Moment formulas and identities against the pmf table.
    Moments { path: PathBuf },
    /// Draw X and write CSV, one row per draw.
    Sample { path: PathBuf },
    /// Build A_sym and report the determinant inequalities.
    Symmetrize { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if cli.schema {
        commands::schema(&cli)
    } else {
        match &cli.command {
            Some(cmd) => commands::run(&cli, cmd),
            None => Err(CliError::Usage("a subcommand is required (try --help)".into())),
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
