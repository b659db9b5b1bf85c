use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state vector has zero norm")]
    ZeroVector,

    #[error("state dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("observable is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("degenerate postselection: |<Φ|Ψ>| = {overlap:e} is below the 1e-14 threshold")]
    DegeneratePostselection { overlap: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("outside the leading-order regime: estimated probability {probability} exceeds 1")]
    RegimeViolation { probability: f64 },

    #[error("grid does not resolve the meter: {0}")]
    GridResolution(String),

    #[error("shift {shift} lies outside the safe region |shift| <= {limit}")]
    ShiftOutsideGrid { shift: f64, limit: f64 },

    #[error("quadrature did not converge (estimated error {estimate:e})")]
    Quadrature { estimate: f64 },

    #[error("distribution has zero variance")]
    ZeroVariance,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
