use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Correlate,
    Fit,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Simulate => "simulate",
            Stage::Correlate => "correlate",
            Stage::Fit => "fit",
            Stage::Report => "report",
        })
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const FIT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: rrs_core::Error,
    },

    #[error("stage `{stage}`: {path} is missing; run `rrs {needs}` first")]
    MissingInput {
        stage: Stage,
        path: PathBuf,
        needs: Stage,
    },

    /// An input file was written under a different configuration.
    #[error("stage `{stage}`: {path} belongs to configuration {found}, not {expected}")]
    ForeignInput {
        stage: Stage,
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error("stage `{stage}`: {path}: {source}")]
    Io {
        stage: Stage,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn stage(stage: Stage) -> impl Fn(rrs_core::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        use rrs_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::MissingInput { .. } | CliError::ForeignInput { .. } => exit::DATA,
            CliError::Io { .. } => exit::OTHER,
            CliError::Stage { source, .. } => match source {
                E::Config(_) | E::ParameterDomain { .. } | E::OutOfRange { .. } => exit::CONFIG,
                E::Data { .. }
                | E::Format(_)
                | E::Normalization(_)
                | E::Precision { .. }
                | E::InconsistentMeasurement { .. }
                | E::FullyElastic
                | E::Json(_) => exit::DATA,
                E::Fit { .. } | E::Accuracy { .. } => exit::FIT,
                E::Io(_) => exit::OTHER,
            },
        }
    }
}
