use thiserror::Error;

use crate::model::ValidationReport;

/// Failures raised by the auction library.
#[derive(Debug, Error)]
pub enum AuctionError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate market: {0}")]
    DegenerateMarket(String),

    #[error("no trade possible: {0}")]
    NoTrade(String),

    #[error("invalid scenario: {0}")]
    Validation(ValidationReport),

    #[error("instance too large for the brute-force oracle: {0}")]
    InstanceTooLarge(String),

    #[error("scenario generation failed after {attempts} rejected draws")]
    GenerationFailure { attempts: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = AuctionError> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(AuctionError::Domain(msg.into()))
}
