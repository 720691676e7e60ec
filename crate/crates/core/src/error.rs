use thiserror::Error;

/// Errors raised by the numerical model itself.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("negative normal load {0} N passed to tire model")]
    NegativeLoad(f64),
    #[error("non-finite derivative in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("track needs at least two samples")]
    TooShort,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Track(#[from] ParseError),
}

/// Top-level simulation failure. Each variant maps to a CLI exit code.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure at step {step}: {source}")]
    Numerical { step: usize, source: ModelError },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metrics error: {0}")]
    Metrics(String),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(ConfigError::Io { .. }) => 3,
            SimError::Config(_) => 1,
            SimError::Numerical { .. } => 2,
            SimError::Metrics(_) => 1,
            SimError::Io(_) => 3,
        }
    }
}
