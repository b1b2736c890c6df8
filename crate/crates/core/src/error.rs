use thiserror::Error;

/// Errors produced while validating inputs or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates its documented invariant. `key` is the field name.
    #[error("invalid value for `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    /// The commanded duty cannot be realized with the requested dead-time.
    #[error("duty {duty} is unrealizable with t_dead = {t_dead:e} s at period {period:e} s")]
    UnrealizableDuty { duty: f64, t_dead: f64, period: f64 },

    /// The state became non-finite.
    #[error("simulation diverged at t = {t:e} s")]
    Divergence { t: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Wraps a failure with the name of the scenario that produced it.
    #[error("scenario `{name}`: {source}")]
    Scenario {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Strips any scenario wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Scenario { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
