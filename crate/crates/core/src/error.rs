use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("privacy budget exhausted: spent {spent} of {total}, requested {requested}")]
    BudgetExhausted { spent: f64, total: f64, requested: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("baseline success curve has zero area")]
    ZeroBaselineArea,

    #[error(transparent)]
    Cli(#[from] clap::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
