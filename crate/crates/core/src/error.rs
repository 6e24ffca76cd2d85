use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A function was evaluated outside its domain (coincident points,
    /// non-positive conductivity, points outside the domain...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical parameter is out of its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Inputs of inconsistent sizes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Layer data too sparse for the requested mollification scale.
    #[error("sparse layer coverage: fill distance {fill:.3e} exceeds {limit:.3e}")]
    Coverage { fill: f64, limit: f64 },

    /// The boundary trace of the potential is too close to zero to divide by.
    #[error("degenerate boundary trace at node {node}: |U| = {value:.3e} < {floor:.3e}")]
    Degenerate { node: usize, value: f64, floor: f64 },

    /// Node generation failed to place a point inside the domain.
    #[error("geometry rejected generated node {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },

    /// A factorization failed (matrix not positive definite).
    #[error("linear solve failed: {0}")]
    Solve(String),

    /// Configuration problems: unknown keys, malformed values.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; wraps the underlying error with the stage tag.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Stage tag of a pipeline failure, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
