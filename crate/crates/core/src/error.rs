use thiserror::Error;

/// Errors produced by the growth engine, the search layer and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid genome: {0}")]
    InvalidGenome(String),

    /// The grown graph has fewer neurons than the requested inputs plus outputs.
    #[error("graph too small: need {needed} neurons, have {available}")]
    GraphTooSmall { needed: usize, available: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input (configs, genome files)
    /// rather than failures while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidGenome(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
