use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad coordinate, invalid trajectory, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The chosen trajectory is not a member of the choice set it was scored against.
    #[error("choice is not a member of the choice set")]
    NotInChoiceSet,

    /// The human gave feedback the robot's choice set says is impossible.
    #[error("impossible observation: human choice is not in the robot's choice set")]
    ImpossibleObservation,

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("infeasible class {class}: {reason}")]
    InfeasibleClass { class: String, reason: String },

    #[error("goal-biased subset is empty: no demonstration ends at the goal")]
    EmptyBiasSet,

    #[error("infeasible construction: {0}")]
    Infeasible(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{key}`: {message}")]
    Usage { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Stable machine-readable tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::Contract(_) => "contract_violation",
            Error::NotInChoiceSet => "not_in_choice_set",
            Error::ImpossibleObservation => "impossible_observation",
            Error::NumericalDegeneracy(_) => "numerical_degeneracy",
            Error::InfeasibleClass { .. } => "infeasible_class",
            Error::EmptyBiasSet => "empty_bias_set",
            Error::Infeasible(_) => "infeasible",
            Error::Parse { .. } => "parse",
            Error::Usage { .. } => "usage",
            Error::Io { .. } => "file",
            Error::Context { .. } => unreachable!("root never returns a context wrapper"),
        }
    }
}
