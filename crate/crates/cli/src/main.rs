//! `rte`: forward simulation, reconstruction and self-checks for the
//! radiative transfer source problem.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod experiment;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use rte_core::geometry::MeasureSurface;

use crate::commands::selftest::Faults;
use crate::config::{ConfigError, ExperimentConfig};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NON_CONTRACTIVE: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// One or more self-test checks failed; carries their names.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check failed: {}", self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Surface {
    Omega,
    Omega1,
}

#[derive(Debug, Parser)]
#[command(name = "rte", version, about = "Radiative transfer forward solver and source reconstruction")]
struct Cli {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Noise and probe seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Boundary that carries the measurements (overrides `measure_on`).
    #[arg(long, global = true, value_enum)]
    measure_on: Option<Surface>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the forward problem and write u, the sinogram and residuals.
    Forward,
    /// Simulate data on the fine grid and reconstruct on the coarse one.
    Reconstruct,
    /// Run the invariant checks.
    Selftest {
        #[arg(long, hide = true)]
        break_adjoint: bool,
        #[arg(long, hide = true)]
        tangent_grid: bool,
    },
    /// Scan the scattering strength λ in (σ, λk).
    LambdaSweep {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
        lambdas: Vec<f64>,
    },
    /// Check ⟨Xf, g⟩_Σ = ⟨f, X*g⟩ on random pairs.
    AdjointTest {
        #[arg(long, hide = true)]
        break_adjoint: bool,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.measure_on {
        cfg.measure_on = match m {
            Surface::Omega => MeasureSurface::Omega,
            Surface::Omega1 => MeasureSurface::Omega1,
        };
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = load(&cli)?;
    match cli.command {
        Command::Forward => commands::forward::run(&cfg),
        Command::Reconstruct => commands::reconstruct::run(&cfg),
        Command::Selftest { break_adjoint, tangent_grid } => {
            commands::selftest::run(&cfg, Faults { break_adjoint, tangent_grid })
        }
        Command::LambdaSweep { lambdas } => commands::sweep::run(&cfg, &lambdas),
        Command::AdjointTest { break_adjoint } => {
            commands::selftest::run_adjoint(&cfg, Faults { break_adjoint, tangent_grid: false })
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if cause.is::<CheckFailed>() {
            return EXIT_CHECK;
        }
        if let Some(rte_core::Error::NonContractive { .. }) = cause.downcast_ref::<rte_core::Error>() {
            return EXIT_NON_CONTRACTIVE;
        }
    }
    EXIT_OTHER
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
