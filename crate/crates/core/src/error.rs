use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("exhaustive search over {size} elements exceeds the limit of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error(
        "quadrature did not converge after {intervals} subintervals (error estimate {estimate:e})"
    )]
    Quadrature { intervals: usize, estimate: f64 },

    #[error("negative quadratic form {0:e}")]
    NegativeQuadraticForm(f64),

    #[error("need at least {needed} codewords, got {got}")]
    TooFewCodewords { needed: usize, got: usize },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SizeGuard { .. } => "size_guard",
            Error::Quadrature { .. } => "quadrature",
            Error::NegativeQuadraticForm(_) => "negative_quadratic_form",
            Error::TooFewCodewords { .. } => "too_few_codewords",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
