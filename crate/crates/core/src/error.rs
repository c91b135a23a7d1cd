use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("matrix is not unitary (max deviation of U^dagger U from identity: {0:e})")]
    NotUnitary(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("impossible postselection: filtered trace {0:e} is below tolerance")]
    ImpossiblePostselection(f64),

    #[error("mixing weight {0} is outside [0, 1]")]
    InvalidWeight(f64),

    #[error("capacity must be at least {min}, got {got}")]
    CapacityTooSmall { min: usize, got: usize },

    #[error("measurement set is not informationally complete (rank {rank}, need {needed})")]
    NotInformationallyComplete { rank: usize, needed: usize },

    #[error("statistics do not match the measurement set: {0}")]
    StatisticsMismatch(String),

    #[error("invalid preparation: {0}")]
    InvalidPreparation(String),

    #[error("outcome {outcome} out of range for a measurement with {n_outcomes} outcomes")]
    OutcomeOutOfRange { outcome: usize, n_outcomes: usize },

    #[error("ledger {path}: line {line}: {message}")]
    CorruptLedger {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("allowed-outcome mask is empty")]
    EmptyMask,

    #[error("external freedom sequence exhausted after {0} outcomes")]
    ExternalSourceExhausted(usize),

    #[error("born_oracle build-up requires a Born probability vector")]
    MissingBornVector,

    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
