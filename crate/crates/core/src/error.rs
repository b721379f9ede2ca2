use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate geometry: position ({0}, {1}) coincides with the sensor")]
    DegenerateGeometry(f64, f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The leave-one-out variance denominator vanished: the probed atom lies
    /// (numerically) in the span of the remaining active atoms.
    #[error("degenerate component statistics (denominator {0:e})")]
    DegenerateStatistics(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
