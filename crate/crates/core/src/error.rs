use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("critical flow ratio sum {0} is oversaturated (must be below 1)")]
    Oversaturated(f64),
    #[error("search space of {count} sequences exceeds cap {cap}")]
    TooLarge { count: u128, cap: u64 },
    #[error("invalid config field `{field}`: {msg}")]
    Config { field: String, msg: String },
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: &str, msg: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), msg: msg.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
