use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("measure is not a probability measure (total mass {mass})")]
    NotProbability { mass: f64 },

    #[error("too large for exact enumeration: {count} states exceeds cap {cap}")]
    TooLarge { count: u128, cap: u128 },

    #[error("{what} order {order} exceeds cap {cap}")]
    OrderCap {
        what: &'static str,
        order: usize,
        cap: usize,
    },

    #[error("rejection sampler gave up after {attempts} attempts (acceptance rate estimate {acceptance_rate:.3e})")]
    AttemptsExhausted {
        attempts: u64,
        acceptance_rate: f64,
    },

    #[error("partition distributions over different n ({0} vs {1})")]
    MismatchedN(usize, usize),

    #[error("oracle disagreement: {0}")]
    OracleMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
