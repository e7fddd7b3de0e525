use thiserror::Error;

/// Errors raised by the simulator and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {key}: {reason}")]
    Config { key: String, reason: String },

    #[error("weight {value} at ({row}, {col}) outside 0..=63")]
    WeightOutOfRange { row: usize, col: usize, value: i64 },

    #[error("time step {dt} us too coarse for tau_syn {tau_syn} us (need dt <= tau_syn/4)")]
    StepTooCoarse { dt: f64, tau_syn: f64 },

    #[error("{what} index {index} out of range 0..{len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("spike train invalid: {0}")]
    SpikeTrain(String),

    #[error("non-finite network state in neuron {neuron}")]
    NonFinite { neuron: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Configuration errors map to CLI exit code 1, everything else to 2.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::WeightOutOfRange { .. }
                | Error::StepTooCoarse { .. }
                | Error::SpikeTrain(_)
                | Error::Parse(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
