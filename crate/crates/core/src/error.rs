//! Error type shared by every module of the toolkit.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside its declared range.
    #[error("{what} = {value} is outside [{min}, {max}]")]
    Range {
        what: String,
        value: f64,
        min: f64,
        max: f64,
    },

    /// A precondition on an argument that is not a simple numeric range.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A controller hook produced unusable parameters.
    #[error("cycle {cycle}: controller returned invalid parameters: {source}")]
    HookRange {
        cycle: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical fault in {0}: non-finite intermediate value")]
    NumericalFault(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// Statistical inference is impossible with the given data.
    #[error("inference error: {0}")]
    Inference(String),

    #[error("measurement plan infeasible: tasks overflow the idle window by {overflow:.3} s")]
    Infeasible { overflow: f64 },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    /// Wrong recurrence kind for the requested operation.
    #[error("mode error: {0}")]
    Mode(String),

    /// An object was used before it reached the required state (e.g. an untrained network).
    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config error: missing required key `seed` (no clock-derived default)")]
    MissingSeed,

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(what: impl Into<String>, value: f64, min: f64, max: f64) -> Self {
        Error::Range {
            what: what.into(),
            value,
            min,
            max,
        }
    }
}
