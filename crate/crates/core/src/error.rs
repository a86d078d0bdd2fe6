use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A structural constraint of the assignment problem that an (α, β) pair breaks.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Violation {
    /// Communication target is served by zero or several SPVs.
    CommCoverage { target: usize, servers: usize },
    /// Sensing target is sensed by zero or several SPVs.
    SenseCoverage { target: usize, servers: usize },
    /// SPV is active in both communication and sensing mode.
    ModeConflict { spv: usize },
    /// Sensing SINR under the minimum requirement.
    SensingSinr { target: usize, sinr: OrderedSinr },
    /// Matrix dimensions disagree with the topology.
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// SINR wrapper so `Violation` can stay `Eq`; compares bit patterns.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OrderedSinr(pub f64);

impl PartialEq for OrderedSinr {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for OrderedSinr {}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CommCoverage { target, servers } => {
                write!(f, "comm target {target} has {servers} servers (need exactly 1)")
            }
            Violation::SenseCoverage { target, servers } => {
                write!(f, "sensing target {target} has {servers} servers (need exactly 1)")
            }
            Violation::ModeConflict { spv } => {
                write!(f, "SPV {spv} is active in both communication and sensing mode")
            }
            Violation::SensingSinr { target, sinr } => {
                write!(f, "sensing target {target} SINR {:.4} below minimum", sinr.0)
            }
            Violation::Shape { expected, found } => {
                write!(f, "matrix shape {found:?}, expected {expected:?}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid assignment: {}", join(.0))]
    InvalidAssignment(Vec<Violation>),

    #[error("topology generation failed: {0}")]
    Generation(String),

    #[error("trace ingestion failed: {0}")]
    Ingest(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error(
        "enumeration budget exceeded: {candidates} candidate assignments > budget {budget}; \
         shrink the instance or raise `enumeration_budget`"
    )]
    BudgetExceeded { candidates: f64, budget: u64 },

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
