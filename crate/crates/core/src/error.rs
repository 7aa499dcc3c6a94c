use thiserror::Error;

/// Errors raised by the geometry, model, control and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NotSkew(f64),

    #[error("link constraint violated: |q . omega| = {0:.3e}")]
    ConstraintViolation(f64),

    #[error("exponent {0} outside the open interval (0, 1)")]
    BadExponent(f64),

    #[error("matrix is singular or reflecting, cannot orthonormalize")]
    Degenerate,

    #[error("regressor expects {expected} parameters, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("coupled mass matrix is singular (condition estimate {0:.3e})")]
    SingularMass(f64),

    #[error("attachment matrix P P^T is rank deficient")]
    RankDeficient,

    #[error("desired tension of link {link} is degenerate (|mu_d| = {norm:.3e})")]
    DegenerateTension { link: usize, norm: f64 },

    #[error("estimate norm {norm} exceeds the bound {bound}")]
    OutOfBall { norm: f64, bound: f64 },

    #[error("commanded thrust is degenerate (|u| = {0:.3e})")]
    DegenerateThrust(f64),

    #[error("heading direction is collinear with the thrust axis")]
    HeadingCollinear,

    #[error("finite differencing needs {needed} samples, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
