use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Input spike times (us), strictly increasing, relative to the window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::SpikeTrain(format!("invalid spike time {t}")));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::SpikeTrain("times must be strictly increasing".into()));
        }
        Ok(SpikeTrain { times })
    }

    /// `n` spikes at 0, isi, 2*isi, ...
    pub fn regular(n: usize, isi: f64) -> Self {
        SpikeTrain {
            times: (0..n).map(|k| k as f64 * isi).collect(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn last(&self) -> Option<f64> {
        self.times.last().copied()
    }
}
