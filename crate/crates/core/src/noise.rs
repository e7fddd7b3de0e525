//! Fixed-pattern substrate variability and temporal noise amplitude.
//!
//! A [`SubstrateNoise`] is one "virtual chip": per-neuron multiplicative
//! factors on the three LIF time constants, additive offsets on the three
//! LIF voltages, per-synapse factors on the correlation sensor amplitude and
//! time constant, and a per-synapse ADC offset. It is sampled once from
//! `(seed_fp, profile)` and never changes afterwards.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{keyed, Stream};
use crate::snn::{LifParams, N_INPUTS, N_NEURONS, N_SYNAPSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Ideal,
    Calibrated,
    Uncalibrated,
}

impl std::str::FromStr for ProfileName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(ProfileName::Ideal),
            "calibrated" => Ok(ProfileName::Calibrated),
            "uncalibrated" => Ok(ProfileName::Uncalibrated),
            other => Err(format!(
                "unknown profile {other:?} (expected ideal, calibrated or uncalibrated)"
            )),
        }
    }
}

impl std::fmt::Display for ProfileName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProfileName::Ideal => "ideal",
            ProfileName::Calibrated => "calibrated",
            ProfileName::Uncalibrated => "uncalibrated",
        })
    }
}

/// Spread magnitudes for one substrate model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub name: ProfileName,
    /// Raw manufacturing spread of the time constants before calibration.
    pub cv_uncalibrated: f64,
    /// Spread of the time constants as seen by the network.
    pub cv_time_constants: f64,
    pub cv_sensor: f64,
    /// Standard deviation of the leak, threshold and reset offsets (V).
    pub sigma_voltage_offsets: f64,
    /// Standard deviation of the per-synapse ADC offset (LSB).
    pub sigma_adc_offset: f64,
}

pub const CV_UNCALIBRATED: f64 = 0.20;
pub const CV_CALIBRATED: f64 = 0.05;
pub const CV_SENSOR: f64 = 0.15;
pub const SIGMA_VOLTAGE_OFFSETS: f64 = 0.02;
pub const SIGMA_ADC_OFFSET: f64 = 2.0;

impl NoiseProfile {
    pub fn ideal() -> Self {
        NoiseProfile {
            name: ProfileName::Ideal,
            cv_uncalibrated: 0.0,
            cv_time_constants: 0.0,
            cv_sensor: 0.0,
            sigma_voltage_offsets: 0.0,
            sigma_adc_offset: 0.0,
        }
    }

    pub fn calibrated() -> Self {
        NoiseProfile {
            name: ProfileName::Calibrated,
            cv_uncalibrated: CV_UNCALIBRATED,
            cv_time_constants: CV_CALIBRATED,
            cv_sensor: CV_SENSOR,
            sigma_voltage_offsets: SIGMA_VOLTAGE_OFFSETS,
            sigma_adc_offset: SIGMA_ADC_OFFSET,
        }
    }

    pub fn uncalibrated() -> Self {
        NoiseProfile {
            name: ProfileName::Uncalibrated,
            cv_time_constants: CV_UNCALIBRATED,
            ..Self::calibrated()
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::Ideal => Self::ideal(),
            ProfileName::Calibrated => Self::calibrated(),
            ProfileName::Uncalibrated => Self::uncalibrated(),
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let fields = [
            ("cv_uncalibrated", self.cv_uncalibrated),
            ("cv_time_constants", self.cv_time_constants),
            ("cv_sensor", self.cv_sensor),
            ("sigma_voltage_offsets", self.sigma_voltage_offsets),
            ("sigma_adc_offset", self.sigma_adc_offset),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(crate::Error::config(key, "must be finite and >= 0"));
            }
        }
        match self.name {
            ProfileName::Ideal if fields.iter().any(|&(_, v)| v != 0.0) => Err(
                crate::Error::config("profile", "ideal profile requires all spreads to be zero"),
            ),
            ProfileName::Calibrated if self.cv_time_constants > CV_CALIBRATED => Err(
                crate::Error::config("cv_time_constants", "calibrated profile requires <= 0.05"),
            ),
            _ => Ok(()),
        }
    }
}

/// One sampled virtual chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstrateNoise {
    pub seed_fp: u64,
    pub profile: NoiseProfile,
    pub tau_mem: Vec<f64>,
    pub tau_syn: Vec<f64>,
    pub tau_ref: Vec<f64>,
    pub v_leak: Vec<f64>,
    pub v_thresh: Vec<f64>,
    pub v_reset: Vec<f64>,
    /// Row-major, index `m * 32 + n`.
    pub eta_plus: Vec<f64>,
    pub tau_plus: Vec<f64>,
    pub adc_offset: Vec<f64>,
    /// Temporal current-noise amplitude at the reference step.
    pub sigma_i: f64,
}

fn lognormal_factors(seed: u64, stream: Stream, n: usize, cv: f64) -> Vec<f64> {
    if cv == 0.0 {
        return vec![1.0; n];
    }
    let s2 = (1.0 + cv * cv).ln();
    let (mu, s) = (-0.5 * s2, s2.sqrt());
    (0..n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut keyed(seed, stream, i as u32));
            (mu + s * z).exp()
        })
        .collect()
}

fn normal_offsets(seed: u64, stream: Stream, n: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut keyed(seed, stream, i as u32));
            sigma * z
        })
        .collect()
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Shrink factors toward 1 so their CV becomes `residual_cv`, keeping order.
fn shrink_toward_one(factors: &[f64], residual_cv: f64) -> Vec<f64> {
    let n = factors.len() as f64;
    let mean = factors.iter().sum::<f64>() / n;
    let std = (factors.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 || residual_cv >= std / mean {
        return factors.to_vec();
    }
    // f' = 1 + s (f - 1) has std s*std and mean 1 + s (mean - 1).
    let s = residual_cv / (std - residual_cv * (mean - 1.0));
    factors.iter().map(|f| 1.0 + s * (f - 1.0)).collect()
}

/// Sample a virtual chip. Deterministic in `(seed_fp, profile)`.
pub fn sample_substrate(seed_fp: u64, profile: &NoiseProfile) -> SubstrateNoise {
    let tc = |stream| {
        let raw = lognormal_factors(seed_fp, stream, N_NEURONS, profile.cv_uncalibrated);
        if profile.cv_time_constants < profile.cv_uncalibrated {
            shrink_toward_one(&raw, profile.cv_time_constants)
        } else {
            raw
        }
    };
    SubstrateNoise {
        seed_fp,
        profile: *profile,
        tau_mem: tc(Stream::TauMem),
        tau_syn: tc(Stream::TauSyn),
        tau_ref: tc(Stream::TauRef),
        v_leak: normal_offsets(seed_fp, Stream::VLeak, N_NEURONS, profile.sigma_voltage_offsets),
        v_thresh: normal_offsets(seed_fp, Stream::VThresh, N_NEURONS, profile.sigma_voltage_offsets),
        v_reset: normal_offsets(seed_fp, Stream::VReset, N_NEURONS, profile.sigma_voltage_offsets),
        eta_plus: lognormal_factors(seed_fp, Stream::SensorEta, N_SYNAPSES, profile.cv_sensor),
        tau_plus: lognormal_factors(seed_fp, Stream::SensorTau, N_SYNAPSES, profile.cv_sensor),
        adc_offset: normal_offsets(seed_fp, Stream::AdcOffset, N_SYNAPSES, profile.sigma_adc_offset),
        sigma_i: 0.0,
    }
}

/// Reduce the time-constant spread of an uncalibrated chip to `residual_cv`.
/// Voltage offsets and synapse variability are left untouched.
pub fn apply_calibration(uncalibrated: &SubstrateNoise, residual_cv: f64) -> SubstrateNoise {
    let mut out = uncalibrated.clone();
    out.tau_mem = shrink_toward_one(&uncalibrated.tau_mem, residual_cv);
    out.tau_syn = shrink_toward_one(&uncalibrated.tau_syn, residual_cv);
    out.tau_ref = shrink_toward_one(&uncalibrated.tau_ref, residual_cv);
    out.profile.cv_time_constants = residual_cv.min(out.profile.cv_time_constants);
    if out.profile.name == ProfileName::Uncalibrated && residual_cv <= CV_CALIBRATED {
        out.profile.name = ProfileName::Calibrated;
    }
    out
}

impl SubstrateNoise {
    pub fn ideal() -> Self {
        sample_substrate(0, &NoiseProfile::ideal())
    }

    pub fn with_sigma_i(mut self, sigma_i: f64) -> Self {
        self.sigma_i = sigma_i;
        self
    }

    /// LIF parameters of physical neuron `n` on this chip.
    pub fn effective_params(&self, base: &LifParams, n: usize) -> LifParams {
        LifParams {
            tau_mem: base.tau_mem * self.tau_mem[n],
            tau_syn: base.tau_syn * self.tau_syn[n],
            tau_ref: base.tau_ref * self.tau_ref[n],
            v_leak: base.v_leak + self.v_leak[n],
            v_thresh: base.v_thresh + self.v_thresh[n],
            v_reset: base.v_reset + self.v_reset[n],
            c_mem: base.c_mem,
        }
    }

    /// Stored ADC offset estimate: the true offset rounded to an integer.
    pub fn adc_offset_estimate(&self, idx: usize) -> i32 {
        self.adc_offset[idx].round() as i32
    }

    /// Reassign logical action unit `n` to physical neuron `perm[n]`.
    /// Neuron and synapse-column variability follow the physical neuron.
    pub fn permute_neurons(&self, perm: &[usize]) -> SubstrateNoise {
        assert_eq!(perm.len(), N_NEURONS);
        let pick = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let pick_cols = |v: &Vec<f64>| {
            (0..N_SYNAPSES)
                .map(|i| v[(i / N_NEURONS) * N_NEURONS + perm[i % N_NEURONS]])
                .collect::<Vec<_>>()
        };
        SubstrateNoise {
            seed_fp: self.seed_fp,
            profile: self.profile,
            tau_mem: pick(&self.tau_mem),
            tau_syn: pick(&self.tau_syn),
            tau_ref: pick(&self.tau_ref),
            v_leak: pick(&self.v_leak),
            v_thresh: pick(&self.v_thresh),
            v_reset: pick(&self.v_reset),
            eta_plus: pick_cols(&self.eta_plus),
            tau_plus: pick_cols(&self.tau_plus),
            adc_offset: pick_cols(&self.adc_offset),
            sigma_i: self.sigma_i,
        }
    }
}

const _: () = assert!(N_SYNAPSES == N_INPUTS * N_NEURONS);
