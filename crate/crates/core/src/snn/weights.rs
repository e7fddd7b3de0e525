use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{N_INPUTS, N_NEURONS, N_SYNAPSES};
use crate::{Error, Result};

pub const MAX_WEIGHT: u8 = 63;

/// 6-bit synaptic weights, row = input unit m, column = action neuron n.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightMatrix(Vec<u8>);

impl WeightMatrix {
    pub fn filled(w: u8) -> Self {
        assert!(w <= MAX_WEIGHT);
        WeightMatrix(vec![w; N_SYNAPSES])
    }

    pub fn from_rows(rows: &[[i64; N_NEURONS]; N_INPUTS]) -> Result<Self> {
        let mut out = Vec::with_capacity(N_SYNAPSES);
        for (m, row) in rows.iter().enumerate() {
            for (n, &value) in row.iter().enumerate() {
                if !(0..=MAX_WEIGHT as i64).contains(&value) {
                    return Err(Error::WeightOutOfRange { row: m, col: n, value });
                }
                out.push(value as u8);
            }
        }
        Ok(WeightMatrix(out))
    }

    pub fn from_flat(values: Vec<u8>) -> Result<Self> {
        if values.len() != N_SYNAPSES {
            return Err(Error::Parse(format!("expected {N_SYNAPSES} weights, got {}", values.len())));
        }
        if let Some(i) = values.iter().position(|&w| w > MAX_WEIGHT) {
            return Err(Error::WeightOutOfRange {
                row: i / N_NEURONS,
                col: i % N_NEURONS,
                value: values[i] as i64,
            });
        }
        Ok(WeightMatrix(values))
    }

    /// Gaussian draws rounded to integers and clamped to the 6-bit range.
    pub fn gaussian<R: Rng>(mean: f64, sigma: f64, rng: &mut R) -> Self {
        let dist = Normal::new(mean, sigma.max(0.0)).expect("finite sigma");
        WeightMatrix(
            (0..N_SYNAPSES)
                .map(|_| dist.sample(rng).round().clamp(0.0, MAX_WEIGHT as f64) as u8)
                .collect(),
        )
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> u8 {
        self.0[m * N_NEURONS + n]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, w: u8) {
        assert!(w <= MAX_WEIGHT);
        self.0[m * N_NEURONS + n] = w;
    }

    pub fn row(&self, m: usize) -> &[u8] {
        &self.0[m * N_NEURONS..(m + 1) * N_NEURONS]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    /// Raw access for the plasticity update; callers keep entries <= 63.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.0
    }

    /// Hex SHA-256 prefix, for per-iteration logging.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(&self.0);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(N_SYNAPSES * 3);
        for m in 0..N_INPUTS {
            let row: Vec<String> = self.row(m).iter().map(|w| w.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Parse 32 lines of 32 comma-separated integers; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::with_capacity(N_SYNAPSES);
        let mut rows = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let before = values.len();
            for field in line.split(',') {
                let v: i64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad weight {field:?} in row {rows}")))?;
                if !(0..=MAX_WEIGHT as i64).contains(&v) {
                    return Err(Error::WeightOutOfRange {
                        row: rows,
                        col: values.len() - before,
                        value: v,
                    });
                }
                values.push(v as u8);
            }
            if values.len() - before != N_NEURONS {
                return Err(Error::Parse(format!("row {rows} has {} columns", values.len() - before)));
            }
            rows += 1;
        }
        if rows != N_INPUTS {
            return Err(Error::Parse(format!("expected {N_INPUTS} rows, got {rows}")));
        }
        Ok(WeightMatrix(values))
    }
}

/// Digitized causal correlations A+ (0..=127), same layout as [`WeightMatrix`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correlations(pub Vec<u8>);

impl Correlations {
    pub fn zeros() -> Self {
        Correlations(vec![0; N_SYNAPSES])
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> u8 {
        self.0[m * N_NEURONS + n]
    }

    pub fn set(&mut self, m: usize, n: usize, a: u8) {
        assert!(a <= 127);
        self.0[m * N_NEURONS + n] = a;
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }
}
