//! `lleaks` command-line front end.
//!
//! Every phase reads its prerequisites from the output directory, checks
//! them against `manifest.json` and records what it opened and wrote.
//! Exit codes: 0 success, 1 usage or config error, 2 missing prerequisite,
//! 3 integrity failure.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::{ARTIFACT_ATTACK_MODEL, ARTIFACT_ATTACK_SET, ARTIFACT_DATASET, ARTIFACT_REPORT,
    ARTIFACT_SHADOW, ARTIFACT_SPLITS, ARTIFACT_TARGET};
pub use config::{Preset, RunConfig, ShadowMode};
pub use manifest::{Access, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "lleaks", version, about = "Membership inference through distilled shadow models")]
pub struct Cli {
    /// Run configuration (key = value with [section] headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "LLEAKS_OUT", default_value = "runs")]
    pub out: PathBuf,

    /// Overrides the run seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Builds the dataset container and the disjoint splits.
    PrepareData,
    /// Trains the target model on its split.
    TrainTarget,
    /// Trains the shadow model from target queries.
    DistillShadow,
    /// Labels shadow posteriors as member or non-member.
    BuildAttack,
    /// Fits the per-class attack models.
    TrainAttack,
    /// Attacks the target and writes the report.
    Evaluate,
    /// Runs one experiment end to end.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
    },
    /// Verifies a manifest and summarizes its runs.
    Report {
        /// Defaults to the manifest in the output directory.
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Ablation,
    MissingClass,
    OverfitSweep,
    Architectures,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Ablation => "ablation",
            ExperimentName::MissingClass => "missing-class",
            ExperimentName::OverfitSweep => "overfit-sweep",
            ExperimentName::Architectures => "architectures",
        }
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }

    pub fn missing(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::usage(format!("{}: {e}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        let code = match &e {
            E::BadMagic { .. } | E::Truncated { .. } | E::DescriptorMismatch { .. } => 3,
            _ => 1,
        };
        CliError { code, message: e.to_string() }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.trim_end();
            return Err(CliError::usage(text.strip_prefix("error: ").unwrap_or(text)));
        }
    };
    commands::dispatch(cli)
}

/// Binary entry point.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
