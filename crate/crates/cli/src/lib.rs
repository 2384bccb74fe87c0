//! Batch driver for the maximal-regularity experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] maxreg_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Command {
    Semigroup,
    Kato,
    Sweep,
    Counterexample,
    Cotlar,
    Cauchy,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Semigroup,
        Command::Kato,
        Command::Sweep,
        Command::Counterexample,
        Command::Cotlar,
        Command::Cauchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Semigroup => "semigroup",
            Command::Kato => "kato",
            Command::Sweep => "sweep",
            Command::Counterexample => "counterexample",
            Command::Cotlar => "cotlar",
            Command::Cauchy => "cauchy",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One named invariant and whether it held.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Report files (name, contents) and checks produced by one subcommand.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<(String, String)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_str())
    }
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate(cmd)?;
    match cmd {
        Command::Semigroup => commands::semigroup(cfg),
        Command::Kato => commands::kato(cfg),
        Command::Sweep => commands::sweep(cfg),
        Command::Counterexample => commands::counterexample(cfg),
        Command::Cotlar => commands::cotlar(cfg),
        Command::Cauchy => commands::cauchy(cfg),
    }
}
