use thiserror::Error;

use crate::feasibility::FeasibilityReport;
use crate::xdd::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [{min}, {max}]")]
    Range {
        what: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },

    #[error("{what} = {value} is not allowed: {reason}")]
    Parameter {
        what: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid distribution: {0}")]
    Validation(ValidationReport),

    #[error("malformed sequence: {0}")]
    MalformedSequence(String),

    #[error("sequence is not feasible ({} violated constraint(s))", .0.violations.len())]
    Infeasible(Box<FeasibilityReport<f64>>),

    #[error("invariant expansion leaves negative tail mass {tail:e} at path length {length}")]
    NegativeTail { length: usize, tail: f64 },

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("XOR-sets of size {degree} at hop {hop} are not equiprobable (spread {spread:e})")]
    Uniformity { hop: usize, degree: usize, spread: f64 },

    #[error("unreachable APA entry (hop {hop}, degree {degree}) consulted")]
    UnreachableState { hop: usize, degree: usize },

    #[error("configuration: {0}")]
    Config(String),

    #[error("hop {hop} resolved to two different IDs ({first:#x} vs {second:#x})")]
    Corruption { hop: usize, first: u64, second: u64 },

    #[error("decoded ID for hop {hop} does not match the switch on the path")]
    WrongDecode { hop: usize },

    #[error("mean-field objective needs mass on degree 1")]
    NoDegreeOneMass,

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn range(what: &'static str, value: usize, min: usize, max: usize) -> Self {
        Error::Range {
            what,
            value,
            min,
            max,
        }
    }

    /// Validation and feasibility failures, as opposed to runtime trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Range { .. }
                | Error::Parameter { .. }
                | Error::Validation(_)
                | Error::MalformedSequence(_)
                | Error::Infeasible(_)
                | Error::NegativeTail { .. }
                | Error::Format(_)
        )
    }
}
