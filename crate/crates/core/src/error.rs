use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("horizon mismatch: {left} vs {right}")]
    HorizonMismatch { left: u64, right: u64 },

    #[error("index {index} outside 1..={horizon}")]
    IndexOutOfRange { index: u64, horizon: u64 },

    #[error("event indices must be strictly increasing (saw {prev} then {next})")]
    NotIncreasing { prev: u64, next: u64 },

    #[error("precision exhausted after {bits} bits")]
    PrecisionExhausted { bits: usize },

    #[error("symbol window exhausted at coordinate {coordinate}")]
    WindowExhausted { coordinate: i64 },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("evaluation out of range: n={n}, k={k}, depth={depth}")]
    OutOfRange { n: usize, k: usize, depth: usize },

    #[error("unknown identifier: {0}")]
    Unknown(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
