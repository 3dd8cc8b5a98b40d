mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Profile;

#[derive(Parser)]
#[command(name = "covtrace", version, about = "Batch runner for multi-operator private contact tracing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate trajectories and the plaintext ground truth.
    Simulate(Common),
    /// Run tracing, scoring, reveal and identification over a trajectory.
    Protocol {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV (user_id,t,x,y,mo_id,status); simulated from the config when absent.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Tracing overhead per cell size and the identification privacy trade-off.
    Report {
        #[command(flatten)]
        common: Common,
        /// Output directories of earlier `protocol` runs supplying measured overhead.
        #[arg(long = "runs", value_name = "DIR")]
        runs: Vec<PathBuf>,
    },
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Cell side, meters.
    #[arg(long, value_name = "METERS")]
    pub l: Option<u32>,
    /// Number of operators.
    #[arg(long, value_name = "COUNT")]
    pub k: Option<usize>,
    #[arg(long)]
    pub chi: Option<u64>,
    /// Identification window size; enables windowed identification.
    #[arg(long)]
    pub eta: Option<u64>,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Oracle(String),
    Protocol(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Oracle(_) => 3,
            Failure::Protocol(_) => 4,
        }
    }

    /// Input-side errors are configuration problems; everything raised while
    /// the parties interact is a protocol failure.
    pub fn from_core(e: covtrace::Error) -> Self {
        use covtrace::Error::*;
        match e {
            Usage(_) | OutOfRange(_) => Failure::Config(e.to_string()),
            _ => Failure::Protocol(e.to_string()),
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Failure::Protocol(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Oracle(m) => write!(f, "oracle mismatch: {m}"),
            Failure::Protocol(m) => write!(f, "protocol failure: {m}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Protocol { common, trajectories } => commands::protocol(common, trajectories.as_deref()),
        Command::Report { common, runs } => commands::report(common, runs),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covtrace: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use covtrace::Error;

    #[test]
    fn core_errors_map_to_exit_codes() {
        assert_eq!(Failure::from_core(Error::Usage("x".into())).exit_code(), 2);
        assert_eq!(Failure::from_core(Error::OutOfRange("x".into())).exit_code(), 2);
        assert_eq!(Failure::from_core(Error::Protocol("x".into())).exit_code(), 4);
        assert_eq!(Failure::from_core(Error::CheatDetected("x".into())).exit_code(), 4);
        assert_eq!(Failure::from_core(Error::Integrity("x".into())).exit_code(), 4);
        assert_eq!(Failure::Oracle("x".into()).exit_code(), 3);
    }
}
