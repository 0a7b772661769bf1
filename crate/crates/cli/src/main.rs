//! `cowqkd`: batch driver for the sequential-attack toolkit.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 infeasible request,
//! 4 solver non-convergence, 1 anything else (I/O).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Infeasible(String),
    NonConvergence(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, msg) = match self {
            CliError::Validation(m) => ("invalid input", m),
            CliError::Infeasible(m) => ("infeasible", m),
            CliError::NonConvergence(m) => ("solver failed", m),
            CliError::Io(m) => ("i/o error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<cowqkd::Error> for CliError {
    fn from(e: cowqkd::Error) -> Self {
        use cowqkd::Error as E;
        match e {
            E::InfeasibleGain { .. } => CliError::Infeasible(e.to_string()),
            E::NonConvergence { .. } => CliError::NonConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "cowqkd", version, about = "Sequential attack on COW QKD and the key-rate bound it implies")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides sim.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides output.directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides output.format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker threads (overrides sim.replicas); results do not depend on it.
    #[arg(long, global = true)]
    replicas: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate one fixed attack.
    Simulate,
    /// Optimised QBER and visibilities over sweep.gain_grid.
    Frontier,
    /// Key-rate bound R over sweep.eta_grid.
    Bound,
    /// Test experimental operating points against the attack.
    Check,
    /// Optimal unambiguous, minimum-error and intermediate measurements.
    Discriminate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Frontier => "frontier",
            Command::Bound => "bound",
            Command::Check => "check",
            Command::Discriminate => "discriminate",
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.sim.seed = s;
    }
    if let Some(d) = cli.out {
        cfg.output.directory = d;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(r) = cli.replicas {
        cfg.sim.replicas = r;
    }
    cfg.validate_common()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sim.replicas)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let name = cli.command.name();
    let out = pool.install(|| match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Frontier => commands::frontier_cmd(&cfg),
        Command::Bound => commands::bound(&cfg),
        Command::Check => commands::check(&cfg),
        Command::Discriminate => commands::discriminate(&cfg),
    })?;

    // The worker count is not part of the result.
    let mut recorded = cfg.clone();
    recorded.sim.replicas = 1;
    recorded.output.directory = PathBuf::from(".");
    let body = match cfg.output.format {
        Format::Csv => output::render_csv(name, &recorded, &out.table)?,
        Format::Json => output::render_json(name, &recorded, &out.json)?,
    };
    output::write(&cfg.output.directory, name, cfg.output.format, &body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("cowqkd: {e}");
            ExitCode::from(e.code())
        }
    }
}
