//! Command-line front end for `torusflow-core`: manifests, traces,
//! verification suites, the commutant probe and basin censuses.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, Scenario};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "torusflow", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides the configured scenario.
    #[arg(long, global = true, value_name = "ID")]
    pub scenario: Option<Scenario>,
    /// Suppresses the summary line on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the scenario's manifest (inventory, frequencies, recipe).
    Build,
    /// Integrate from `trace.p0` and write dense output as CSV.
    Trace,
    /// Run the scenario's verification suite; exits 1 when a check fails.
    Verify {
        /// Declare a shear of the fiber torus to be an automorphism (negative control).
        #[arg(long)]
        sabotage: bool,
    },
    /// Commutant dimension probe (product-chart scenarios).
    Probe,
    /// Backward-limit census over uniform samples.
    Basin,
}

/// Exit status of a completed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Passed => 0,
            Outcome::Failed => 1,
        }
    }
}

/// Merges the configuration file with command-line overrides.
pub fn resolve_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match (&common.config, common.scenario) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(s)) => RunConfig::for_scenario(s),
        (None, None) => return Err(CliError::Usage("give --config or --scenario".into())),
    };
    if let Some(s) = common.scenario {
        if s != cfg.scenario {
            // Scenario-specific settings from the file no longer apply.
            cfg.frequencies = None;
            cfg.k = None;
            cfg.orders = None;
            cfg.radius = None;
            cfg.trace.p0 = None;
        }
        cfg.scenario = s;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.resolve()
}

/// Runs a parsed command line, returning the outcome and a summary line.
pub fn run(cli: &Cli) -> Result<(Outcome, String), CliError> {
    let cfg = resolve_config(&cli.common)?;
    let out = cli.common.out.as_deref().or(cfg.out.as_deref());
    let ok = |msg: String| (Outcome::Passed, msg);
    let verdict = |(pass, msg): (bool, String)| {
        (
            if pass {
                Outcome::Passed
            } else {
                Outcome::Failed
            },
            msg,
        )
    };
    match &cli.command {
        Command::Build => commands::build(&cfg, out).map(ok),
        Command::Trace => commands::trace(&cfg, out).map(ok),
        Command::Verify { sabotage } => commands::verify(&cfg, out, *sabotage).map(verdict),
        Command::Probe => commands::probe(&cfg, out).map(verdict),
        Command::Basin => commands::basin(&cfg, out).map(ok),
    }
}

/// Sizes the global worker pool from `TORUSFLOW_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("TORUSFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "TORUSFLOW_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(e.to_string()))
}
