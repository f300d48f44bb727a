//! Command-line front end: configuration files in, CSV tables and a run
//! manifest out.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use loctime::exact::ExactError;
use loctime::experiments::ExperimentError;
use loctime::local_times::LocalTimeError;

pub use commands::{Outcome, Suite};
pub use config::{parse_config, LoadedConfig, Overrides};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("resource cap: {0}")]
    Resource(String),
    #[error("{0}")]
    Run(String),
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        CliError::Field { field: field.to_string(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Field { .. } => EXIT_CONFIG,
            CliError::Resource(_) => EXIT_RESOURCE,
            CliError::Run(_) | CliError::Io(_) => EXIT_VERIFY_FAILED,
        }
    }
}

impl From<ExactError> for CliError {
    fn from(e: ExactError) -> Self {
        match e {
            ExactError::MemoryCapExceeded { .. } => CliError::Resource(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Exact(inner) => inner.into(),
            ExperimentError::ResourceLimit(_) => CliError::Resource(e.to_string()),
            ExperimentError::InvalidConfig(_) => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<LocalTimeError> for CliError {
    fn from(e: LocalTimeError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "loctime", version, about = "Local-time statistics of transient lattice random walks")]
pub struct Cli {
    /// Override the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replicas (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Byte budget for dense return-probability tables.
    #[arg(long, global = true)]
    pub mem_cap: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate replicas and write one row per (replica, checkpoint).
    Simulate { config: PathBuf },
    /// Return series, escape probability, E Q_n(j) table and limit constants.
    Exact { config: PathBuf },
    /// Run a verification suite; exits 1 if any check fails.
    Verify {
        config: PathBuf,
        #[arg(long, value_enum)]
        suite: Suite,
    },
    /// Escape probability from the return series and optionally Monte Carlo.
    Gamma { config: PathBuf },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Simulate { .. } => "simulate".into(),
            Command::Exact { .. } => "exact".into(),
            Command::Verify { suite, .. } => format!("verify --suite {suite:?}").to_lowercase(),
            Command::Gamma { .. } => "gamma".into(),
        }
    }

    fn config(&self) -> &PathBuf {
        match self {
            Command::Simulate { config } | Command::Exact { config } | Command::Gamma { config } => config,
            Command::Verify { config, .. } => config,
        }
    }
}

/// Runs a parsed command and returns its outcome.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let started = chrono::Utc::now();
    let path = cli.command.config();
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let overrides = Overrides { seed: cli.seed, threads: cli.threads, mem_cap: cli.mem_cap };
    let cfg = parse_config(&text, overrides)?;
    let mut out = output::OutDir::create(&cli.out_dir)?;
    let outcome = match &cli.command {
        Command::Simulate { .. } => commands::cmd_simulate(&cfg, &mut out)?,
        Command::Exact { .. } => commands::cmd_exact(&cfg, &mut out)?,
        Command::Verify { suite, .. } => commands::cmd_verify(&cfg, *suite, &mut out)?,
        Command::Gamma { .. } => commands::cmd_gamma(&cfg, &mut out)?,
    };
    let manifest = output::RunManifest {
        tool: "loctime",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config_digest: output::config_digest(&text),
        seed: cfg.experiment.seed,
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        files: out
            .files()
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    manifest.write(out.root())?;
    Ok(outcome)
}

/// Parses arguments, runs, prints a short summary and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            if outcome.all_hold {
                EXIT_OK
            } else {
                EXIT_VERIFY_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
