//! Process-level error taxonomy. Input and configuration problems exit
//! with code 2, computation failures with code 1; both emit a one-line
//! JSON object on stderr so wrappers can parse the outcome.

use hpindex_core::analysis::AnalysisError;
use hpindex_core::graph::GraphError;
use hpindex_core::ingest::IngestError;
use hpindex_core::pca::PcaError;
use hpindex_core::solver::SolverError;
use hpindex_core::synth::SynthError;
use hpindex_core::time::TimeError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Missing or malformed inputs, files, flags, or configuration.
    #[error("{0}")]
    Input(String),
    /// Failures while computing on valid inputs.
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError::Input(message.into())
    }

    pub fn compute(message: impl Into<String>) -> Self {
        CliError::Compute(message.into())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Compute(_) => "compute",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<TimeError> for CliError {
    fn from(e: TimeError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<PcaError> for CliError {
    fn from(e: PcaError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Compute(e.to_string())
    }
}
