use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value violates an invariant of one of the domain types.
    #[error("invalid {what}: {constraint}")]
    Invalid {
        what: &'static str,
        constraint: String,
    },

    /// Two objects that must agree (basis, dimension) do not.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("label {0} is not present in the symmetry block")]
    LabelNotFound(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("propagation step rejected at t = {t_ns} ns: {reason}")]
    StepRejected { t_ns: f64, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, constraint: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            constraint: constraint.into(),
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Eigen(_) | Error::StepRejected { .. })
    }
}
