use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for config key `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("config line {line}: expected `key = value`, got `{text}`")]
    MalformedConfig { line: usize, text: String },

    #[error("algorithm {0} is out of range 0..=9")]
    InvalidAlgorithm(u8),

    #[error("trace line {line}: {reason}")]
    Trace { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
