//! Command-line front end: `classify`, `trace`, `kernel`, `simulate`, `verify`.

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::simulator::Mode;
use config::{ConfigError, Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "backstep", version, about = "Backstepping boundary control along characteristics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, replacing `outputs.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Boundary chart samples per parameter axis.
    #[arg(long)]
    pub leaves: Option<usize>,
    /// Target time step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Kernel grid size `M`.
    #[arg(long = "kernel-m")]
    pub kernel_m: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition the boundary into inflow, outflow and tangential points.
    Classify(Common),
    /// Build the leaves and audit the non-trapping assumption.
    Trace(Common),
    /// Solve the kernel equations on every leaf.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Leaves whose full kernel table is written as CSV (default: the longest leaf).
        #[arg(long = "leaf")]
        leaf: Vec<usize>,
    },
    /// Run the open- or closed-loop simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "closed")]
        mode: Mode,
    },
    /// Run the invariant checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Perturb every kernel table by 0.1 at one node before the residual check.
        #[arg(long = "perturb-kernel")]
        perturb_kernel: bool,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Exit code 2.
    Config(String),
    /// Exit code 3: trapped characteristics, empty outflow boundary.
    Assumption(String),
    /// Exit code 4.
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Assumption(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Assumption(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("output: {e}"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) => Failure::Config(msg),
            Error::EmptyOutflow { .. }
            | Error::Trapped { .. }
            | Error::LeftBoundingBox { .. }
            | Error::TangentialExit { .. }
            | Error::DegenerateGradient { .. }
            | Error::ZeroSpeed { .. } => Failure::Assumption(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

impl Common {
    pub fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            out: self.out.clone(),
            leaves: self.leaves,
            dt: self.dt,
            kernel_m: self.kernel_m,
        })?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Classify(c) => commands::classify(&c.load()?),
        Command::Trace(c) => commands::trace(&c.load()?),
        Command::Kernel { common, leaf } => commands::kernel(&common.load()?, &leaf),
        Command::Simulate { common, mode } => commands::simulate(&common.load()?, mode),
        Command::Verify { common, perturb_kernel } => commands::verify(&common.load()?, perturb_kernel),
    }
}

/// Parses the process arguments, runs the command and maps failures to exit codes.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
