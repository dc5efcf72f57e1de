use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error("point outside the domain closure: {0}")]
    Domain(String),
    #[error("weight evaluated on its singular set")]
    Singularity,
    #[error("degenerate field: denominator mass is zero")]
    DegenerateField,
    #[error("invalid bracket: {0}")]
    Bracket(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("ill-conditioned: {0}")]
    Conditioning(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration failure: {0}")]
    Calibration(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by malformed input rather than a failed computation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Spec(_) | Error::Config(_) | Error::Json(_) | Error::Bracket(_) | Error::Unsupported(_)
        )
    }
}
