use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-positive water height {h} at cell {cell}")]
    NonPositiveHeight { cell: usize, h: f64 },

    #[error("time step {dt} exceeds the stable limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {0} is not a recorded instant of the trajectory")]
    TimeNotRecorded(f64),

    #[error("time {t} lies outside the trajectory span [{t0}, {tf}]")]
    OutOfSpan { t: f64, t0: f64, tf: f64 },

    #[error("forcing times must be strictly increasing")]
    UnorderedForcings,

    #[error("ensemble needs at least two members, got {0}")]
    EnsembleTooSmall(usize),

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("dense assembly limited to {max} state entries, got {got}")]
    TooLargeForDense { got: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
