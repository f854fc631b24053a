use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid resolution {0} must be even and at least 8")]
    InvalidResolution(usize),

    #[error("metric [[{a}, {b}], [{b}, {c}]] is not positive definite")]
    NotPositiveDefinite { a: f64, b: f64, c: f64 },

    #[error("cannot project the zero vector onto the sphere")]
    ZeroVector,

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("right-hand side has nonzero mean {0:e}; the zero-mean elliptic problem has no solution")]
    NonzeroMean(f64),

    #[error("singular mode matrix at wave vector ({kx}, {ky})")]
    SingularMode { kx: f64, ky: f64 },

    #[error("{name} out of range: {value} ({why})")]
    OutOfRange {
        name: &'static str,
        value: f64,
        why: &'static str,
    },

    #[error("numerical abort at t = {t}: {reason}")]
    Abort { t: f64, reason: String },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
