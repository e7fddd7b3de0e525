//! Three-factor weight update with per-state reward baselines.
//!
//! The update emulates integer vector arithmetic: the learning rate and the
//! neuromodulator are both quantized to 1/256, multiplied with the 7-bit
//! correlation, and the 16-bit fractional product is rounded back to whole
//! weight units before the 6-bit clamp.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::snn::{Correlations, WeightMatrix, MAX_WEIGHT, N_INPUTS, N_NEURONS};
use crate::{Error, Result};

pub const N_STATES: usize = 32;

/// Fractional bits of the quantized learning rate and modulator.
const FRAC_BITS: u32 = 8;
const ONE: f64 = (1u32 << FRAC_BITS) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Every synapse is updated each iteration, as on chip.
    #[serde(alias = "all")]
    AllSynapses,
    /// Only the row that received the input spike train.
    ActiveRow,
}

impl std::str::FromStr for UpdateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" | "all-synapses" => Ok(UpdateMode::AllSynapses),
            "active-row" => Ok(UpdateMode::ActiveRow),
            other => Err(format!("unknown update mode {other:?} (expected all or active-row)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Nearest integer, ties away from zero.
    Nearest,
    /// Toward zero.
    Truncate,
    /// Up with probability equal to the fractional part.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningParams {
    pub beta: f64,
    pub gamma: f64,
    pub update_mode: UpdateMode,
    pub rounding: Rounding,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            beta: 0.125,
            gamma: 0.5,
            update_mode: UpdateMode::AllSynapses,
            rounding: Rounding::Nearest,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config("beta", "must be finite and >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Per-state expected rewards and last received rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardState {
    r_bar: [Option<f64>; N_STATES],
    last_reward: [Option<f64>; N_STATES],
}

impl Default for RewardState {
    fn default() -> Self {
        RewardState {
            r_bar: [None; N_STATES],
            last_reward: [None; N_STATES],
        }
    }
}

impl RewardState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn r_bar(&self, k: usize) -> Option<f64> {
        self.r_bar[k]
    }

    pub fn last_reward(&self, k: usize) -> Option<f64> {
        self.last_reward[k]
    }

    pub fn is_initialized(&self, k: usize) -> bool {
        self.r_bar[k].is_some()
    }

    /// Record reward `r` in state `k` and return the neuromodulator `r - R̄_k`
    /// (taken before the moving-average update; 0 on the first visit).
    pub fn update_expected_reward(&mut self, k: usize, r: f64, gamma: f64) -> f64 {
        debug_assert!((0.0..=1.0).contains(&r));
        self.last_reward[k] = Some(r);
        match self.r_bar[k] {
            None => {
                self.r_bar[k] = Some(r);
                0.0
            }
            Some(rb) => {
                let modulator = r - rb;
                self.r_bar[k] = Some(rb + gamma * modulator);
                modulator
            }
        }
    }

    /// Mean of the expected rewards over all states; unvisited states count 0.
    pub fn mean_expected_reward(&self) -> f64 {
        self.r_bar.iter().map(|r| r.unwrap_or(0.0)).sum::<f64>() / N_STATES as f64
    }

    /// Fraction of states whose last reward was nonzero.
    pub fn performance(&self) -> f64 {
        self.last_reward
            .iter()
            .map(|r| r.map_or(0.0, f64::ceil))
            .sum::<f64>()
            / N_STATES as f64
    }
}

fn quantize(x: f64) -> i64 {
    (x * ONE).round() as i64
}

/// Divide by 2^16 with the configured rounding.
fn round_scaled<R: Rng + ?Sized>(scaled: i64, rounding: Rounding, rng: &mut R) -> i64 {
    const SHIFT: u32 = 2 * FRAC_BITS;
    let mag = scaled.unsigned_abs() as i64;
    let q = match rounding {
        Rounding::Nearest => (mag + (1 << (SHIFT - 1))) >> SHIFT,
        Rounding::Truncate => mag >> SHIFT,
        Rounding::Stochastic => {
            let frac = mag & ((1 << SHIFT) - 1);
            (mag >> SHIFT) + (rng.random_range(0..1i64 << SHIFT) < frac) as i64
        }
    };
    q * scaled.signum()
}

/// Quantized weight change for one synapse, before rounding, in units of 2^-16.
pub fn scaled_delta(beta: f64, modulator: f64, a_plus: u8) -> i64 {
    quantize(beta) * quantize(modulator) * a_plus as i64
}

/// Apply Δw = β·modulator·A⁺ to every synapse in scope, clamped to 0..=63.
pub fn apply_weight_update<R: Rng + ?Sized>(
    weights: &mut WeightMatrix,
    a_plus: &Correlations,
    modulator: f64,
    params: &LearningParams,
    active_row: usize,
    rng: &mut R,
) {
    let beta_q = quantize(params.beta);
    let mod_q = quantize(modulator);
    if beta_q == 0 || mod_q == 0 {
        return;
    }
    let rows = match params.update_mode {
        UpdateMode::AllSynapses => 0..N_INPUTS,
        UpdateMode::ActiveRow => active_row..active_row + 1,
    };
    let w = weights.as_mut_slice();
    for m in rows {
        for n in 0..N_NEURONS {
            let idx = m * N_NEURONS + n;
            let a = a_plus.0[idx];
            if a == 0 {
                continue;
            }
            let delta = round_scaled(beta_q * mod_q * a as i64, params.rounding, rng);
            w[idx] = (w[idx] as i64 + delta).clamp(0, MAX_WEIGHT as i64) as u8;
        }
    }
}

/// Sample covariance of paired observations (n - 1 denominator).
pub fn covariance_check(samples: &[(f64, f64)]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let (mr, me) = samples
        .iter()
        .fold((0.0, 0.0), |(a, b), (r, e)| (a + r / n, b + e / n));
    Ok(samples.iter().map(|(r, e)| (r - mr) * (e - me)).sum::<f64>() / (n - 1.0))
}
