use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("mortality table: {0}")]
    Mortality(String),

    /// Every member of the pool died in the period; the group gain is undefined.
    #[error("pool collapse: no surviving nominal credit to scale")]
    PoolCollapse,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid solver grid: {0}")]
    InvalidGrid(String),

    #[error("policy does not match scenario (policy {policy}, scenario {scenario})")]
    FingerprintMismatch { policy: String, scenario: String },

    #[error("sample set too small: {0}")]
    InsufficientSamples(String),

    #[error("historical data: {0}")]
    Data(String),

    #[error("policy file: {0}")]
    PolicyFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
