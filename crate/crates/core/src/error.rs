use thiserror::Error;

/// Errors raised by the sampling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid flat dimension k={k} for ambient dimension d={d}")]
    InvalidDimension { d: usize, k: usize },

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("flat has zero clipped measure")]
    DegenerateFlat,

    #[error("estimate requested over an empty sample")]
    EmptySample,

    #[error("grid resolution must be at least 2, got {0}")]
    InvalidResolution(usize),

    #[error("squish factor must be positive, got {0}")]
    InvalidSquish(f64),

    #[error("back-projected flat is numerically singular (rank < {k})")]
    SingularFlat { k: usize },

    #[error("segment list is empty")]
    EmptyVoid,

    #[error("need at least 2 points, got {0}")]
    InsufficientPoints(usize),

    #[error("point lies outside the open unit box")]
    OutsideDomain,

    #[error("threshold calibration failed: {0}")]
    Calibration(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
