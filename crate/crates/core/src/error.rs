//! Error type shared by every module of the engine.

use thiserror::Error;

/// Everything that can go wrong while loading inputs or running the label
/// pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("cycle in hierarchy: {}", .cycle.join(" -> "))]
    Cycle { cycle: Vec<String> },

    #[error("line {line}: edge references undeclared node '{node}'")]
    DanglingEdge { line: usize, node: String },

    #[error("unknown synset '{0}'")]
    UnknownSynset(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),

    #[error("non-finite {what} loss{}", .iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    NonFiniteLoss {
        what: &'static str,
        iteration: Option<usize>,
    },

    #[error("zero vector for '{0}'")]
    ZeroVector(String),

    #[error("no embedding for '{0}'")]
    MissingEmbedding(String),

    #[error("template must contain exactly one '{{}}' placeholder: {0:?}")]
    BadTemplate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable name of the error kind, used as the
    /// `ERROR:<kind>:` prefix by the command-line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "ParseError",
            Error::Cycle { .. } => "CycleError",
            Error::DanglingEdge { .. } => "DanglingEdgeError",
            Error::UnknownSynset(_) => "UnknownSynsetError",
            Error::DimensionMismatch { .. } => "DimensionMismatchError",
            Error::Invariant(_) => "InvariantError",
            Error::InvalidThreshold(_) => "InvalidThresholdError",
            Error::NonFiniteLoss { .. } => "NonFiniteLossError",
            Error::ZeroVector(_) => "ZeroVectorError",
            Error::MissingEmbedding(_) => "MissingEmbeddingError",
            Error::BadTemplate(_) => "BadTemplateError",
            Error::InvalidConfig(_) => "InvalidConfigError",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            })
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
