//! Flat experiment configuration.
//!
//! Keys follow the usual symbol names of the model (`tau_mem`, `beta`,
//! `v_p`, `N_spikes`, ...). A config file only needs to mention the keys it
//! changes; everything else comes from the parameter-set preset. Unknown keys
//! are rejected.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::calibrate::{calibrate_sigma_i, THRESHOLD_WEIGHT_TARGET};
use crate::noise::{NoiseProfile, ProfileName};
use crate::plasticity::{LearningParams, Rounding, UpdateMode};
use crate::pong::EnvParams;
use crate::snn::{calibrate_weight_scale, LifParams, NetworkConfig, SensorParams, SpikeTrain};
use crate::{Error, Result};

/// Calibrated weight_scale for parameter sets 1-3 at dt = 0.1 us with the
/// standard 20-spike train. Reproduced by the calibration tests.
pub const FROZEN_WEIGHT_SCALE: [f64; 3] = [0.006182677683731203, 0.008024417344712436, 0.00459661248724371];

/// Temporal noise amplitude of the substrate. It belongs to the chip, not to
/// the parameter set, so it is calibrated once on the reference set and
/// shared by all sets.
pub const FROZEN_SIGMA_I: f64 = 0.22301285636425022;

/// Parameter set on which the noise amplitude is calibrated.
pub const NOISE_REFERENCE_SET: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub param_set: u8,

    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    pub v_leak: f64,
    pub v_reset: f64,
    pub v_thresh: f64,
    pub c_mem: f64,
    pub eta_plus: f64,
    pub tau_plus: f64,
    pub eta_minus: f64,
    pub tau_minus: f64,

    #[serde(rename = "N_spikes")]
    pub n_spikes: usize,
    #[serde(rename = "T_ISI")]
    pub t_isi: f64,
    #[serde(rename = "T_emu")]
    pub t_emu: f64,
    pub dt: f64,
    /// Initial weight mean and spread.
    pub w: f64,
    pub sigma_w: f64,

    #[serde(rename = "L")]
    pub field: f64,
    pub v_ball: f64,
    pub v_p: f64,
    pub r_b: f64,
    pub r_p: f64,

    pub beta: f64,
    pub gamma: f64,
    pub update_mode: UpdateMode,
    pub rounding: Rounding,

    pub profile: ProfileName,
    pub cv_uncalibrated: f64,
    pub cv_time_constants: f64,
    pub cv_sensor: f64,
    pub sigma_voltage_offsets: f64,
    pub sigma_adc_offset: f64,

    /// Temporal noise amplitude; `null` means calibrate.
    pub sigma_i: Option<f64>,
    /// Weight-to-current gain; `null` means calibrate.
    pub weight_scale: Option<f64>,

    pub seed_fp: u64,
    pub seed_temporal: u64,
    pub seed_env: u64,
    pub iterations: u64,
}

/// Keys whose change invalidates the frozen calibration constants.
const OPERATING_POINT_KEYS: &[&str] = &[
    "tau_mem", "tau_syn", "tau_ref", "v_leak", "v_reset", "v_thresh", "c_mem", "N_spikes", "T_ISI",
    "T_emu", "dt",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(1)
    }
}

impl ExperimentConfig {
    /// Parameter set 1, 2 or 3 with the calibrated noise profile.
    pub fn preset(set: u8) -> Self {
        let (lif, eta_plus, tau_plus) = match set {
            2 => (LifParams::set2(), 114.0, 80.0),
            3 => (LifParams::set3(), 70.0, 60.0),
            _ => (LifParams::set1(), 72.0, 64.0),
        };
        let set = set.clamp(1, 3);
        let weight_scale = FROZEN_WEIGHT_SCALE[set as usize - 1];
        let env = EnvParams::default();
        let learning = LearningParams::default();
        let mut cfg = ExperimentConfig {
            param_set: set,
            tau_mem: lif.tau_mem,
            tau_syn: lif.tau_syn,
            tau_ref: lif.tau_ref,
            v_leak: lif.v_leak,
            v_reset: lif.v_reset,
            v_thresh: lif.v_thresh,
            c_mem: lif.c_mem,
            eta_plus,
            tau_plus,
            eta_minus: eta_plus,
            tau_minus: tau_plus,
            n_spikes: 20,
            t_isi: 10.0,
            t_emu: 200.0,
            dt: 0.1,
            w: 14.0,
            sigma_w: 2.0,
            field: env.field,
            v_ball: env.ball_speed,
            v_p: env.paddle_speed,
            r_b: env.ball_radius,
            r_p: env.paddle_length,
            beta: learning.beta,
            gamma: learning.gamma,
            update_mode: learning.update_mode,
            rounding: learning.rounding,
            profile: ProfileName::Calibrated,
            cv_uncalibrated: 0.0,
            cv_time_constants: 0.0,
            cv_sensor: 0.0,
            sigma_voltage_offsets: 0.0,
            sigma_adc_offset: 0.0,
            sigma_i: Some(FROZEN_SIGMA_I),
            weight_scale: Some(weight_scale),
            seed_fp: 1,
            seed_temporal: 1,
            seed_env: 1,
            iterations: 100_000,
        };
        cfg.set_profile(ProfileName::Calibrated);
        cfg
    }

    /// Switch profile and reset the spread magnitudes to its defaults.
    pub fn set_profile(&mut self, name: ProfileName) {
        let p = NoiseProfile::named(name);
        self.profile = name;
        self.cv_uncalibrated = p.cv_uncalibrated;
        self.cv_time_constants = p.cv_time_constants;
        self.cv_sensor = p.cv_sensor;
        self.sigma_voltage_offsets = p.sigma_voltage_offsets;
        self.sigma_adc_offset = p.sigma_adc_offset;
    }

    /// Parse a JSON object or `key = value` lines over the preset named by
    /// `param_set` (default 1).
    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        let map = if trimmed.starts_with('{') {
            match serde_json::from_str::<Value>(text)? {
                Value::Object(m) => m,
                _ => return Err(Error::config("<root>", "config must be a JSON object")),
            }
        } else {
            parse_key_values(text)?
        };
        Self::from_map(map)
    }

    pub fn from_map(user: Map<String, Value>) -> Result<Self> {
        let set = match user.get("param_set") {
            None => 1,
            Some(v) => match v.as_u64() {
                Some(s @ 1..=3) => s as u8,
                _ => return Err(Error::config("param_set", "must be 1, 2 or 3")),
            },
        };
        let mut base = Self::preset(set);
        if let Some(p) = user.get("profile") {
            let name: ProfileName = p
                .as_str()
                .ok_or_else(|| Error::config("profile", "must be a string"))?
                .parse()
                .map_err(|e: String| Error::config("profile", e))?;
            base.set_profile(name);
        }
        let defaults = match serde_json::to_value(&base)? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        let mut merged = defaults.clone();
        for (key, value) in &user {
            if !merged.contains_key(key) {
                return Err(Error::config(key.as_str(), "unknown key"));
            }
            merged.insert(key.clone(), value.clone());
        }
        let changed = |k: &&str| user.get(*k).is_some_and(|v| Some(v) != defaults.get(*k));
        if OPERATING_POINT_KEYS.iter().any(changed) && !user.contains_key("weight_scale") {
            merged.insert("weight_scale".into(), Value::Null);
        }
        let cfg: ExperimentConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| {
            // serde names the offending field in its message
            Error::config(guess_key(&e.to_string()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply a single `key=value` override.
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut map = match serde_json::to_value(self)? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        if !map.contains_key(key) {
            return Err(Error::config(key, "unknown key"));
        }
        if key == "param_set" {
            // Rebuild from the new preset, keeping whatever differs from the old one.
            let old = match serde_json::to_value(Self::preset(self.param_set))? {
                Value::Object(m) => m,
                _ => unreachable!(),
            };
            let mut user: Map<String, Value> = map.into_iter().filter(|(k, v)| old.get(k) != Some(v)).collect();
            user.insert(key.into(), parse_scalar(value));
            return Self::from_map(user);
        }
        let before = map.clone();
        map.insert(key.to_string(), parse_scalar(value));
        if OPERATING_POINT_KEYS.contains(&key) && before.get(key) != map.get(key) {
            map.insert("weight_scale".into(), Value::Null);
        }
        if key == "profile" {
            let mut cfg: ExperimentConfig =
                serde_json::from_value(Value::Object(map)).map_err(|e| Error::config(key, e.to_string()))?;
            cfg.set_profile(cfg.profile);
            cfg.validate()?;
            return Ok(cfg);
        }
        let cfg: ExperimentConfig =
            serde_json::from_value(Value::Object(map)).map_err(|e| Error::config(key, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.lif().validate()?;
        self.learning().validate()?;
        self.env().validate()?;
        self.noise_profile().validate()?;
        for (key, v) in [("eta_plus", self.eta_plus), ("tau_plus", self.tau_plus), ("eta_minus", self.eta_minus), ("tau_minus", self.tau_minus)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be finite and > 0"));
            }
        }
        if !(self.dt > 0.0 && self.dt <= self.tau_syn / 4.0) {
            return Err(Error::config("dt", format!("must lie in (0, tau_syn/4], got {}", self.dt)));
        }
        if self.n_spikes == 0 || !(self.t_isi > 0.0) {
            return Err(Error::config("N_spikes", "need at least one spike and T_ISI > 0"));
        }
        if self.t_emu < (self.n_spikes - 1) as f64 * self.t_isi {
            return Err(Error::config("T_emu", "window shorter than the input train"));
        }
        if !(self.w.is_finite() && self.sigma_w.is_finite() && self.sigma_w >= 0.0) {
            return Err(Error::config("sigma_w", "must be finite and >= 0"));
        }
        for (key, v) in [("sigma_i", self.sigma_i), ("weight_scale", self.weight_scale)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::config(key, "must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn lif(&self) -> LifParams {
        LifParams {
            tau_mem: self.tau_mem,
            tau_syn: self.tau_syn,
            tau_ref: self.tau_ref,
            v_leak: self.v_leak,
            v_thresh: self.v_thresh,
            v_reset: self.v_reset,
            c_mem: self.c_mem,
        }
    }

    pub fn sensor(&self) -> SensorParams {
        SensorParams {
            eta_plus: self.eta_plus,
            tau_plus: self.tau_plus,
            eta_minus: self.eta_minus,
            tau_minus: self.tau_minus,
        }
    }

    pub fn learning(&self) -> LearningParams {
        LearningParams {
            beta: self.beta,
            gamma: self.gamma,
            update_mode: self.update_mode,
            rounding: self.rounding,
        }
    }

    pub fn env(&self) -> EnvParams {
        EnvParams {
            field: self.field,
            ball_speed: self.v_ball,
            paddle_speed: self.v_p,
            ball_radius: self.r_b,
            paddle_length: self.r_p,
            n_cols: 32,
        }
    }

    pub fn noise_profile(&self) -> NoiseProfile {
        NoiseProfile {
            name: self.profile,
            cv_uncalibrated: self.cv_uncalibrated,
            cv_time_constants: self.cv_time_constants,
            cv_sensor: self.cv_sensor,
            sigma_voltage_offsets: self.sigma_voltage_offsets,
            sigma_adc_offset: self.sigma_adc_offset,
        }
    }

    pub fn train(&self) -> SpikeTrain {
        SpikeTrain::regular(self.n_spikes, self.t_isi)
    }

    /// Network constants; calibrates the weight scale if it is unset.
    pub fn network_config(&self) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig {
            lif: self.lif(),
            sensor: self.sensor(),
            dt: self.dt,
            weight_scale: self.weight_scale.unwrap_or(0.0),
        };
        if self.weight_scale.is_none() {
            cfg.weight_scale = calibrate_weight_scale(&cfg, &self.train(), self.t_emu, THRESHOLD_WEIGHT_TARGET)?;
        }
        Ok(cfg)
    }

    /// Fill in any calibrated constants that are unset. The noise amplitude
    /// is calibrated on the reference set's neuron and sensor constants with
    /// this config's train, window and step.
    pub fn resolve(&self) -> Result<Self> {
        let mut out = self.clone();
        out.weight_scale = Some(self.network_config()?.weight_scale);
        if out.sigma_i.is_none() {
            let mut reference = Self::preset(NOISE_REFERENCE_SET);
            reference.n_spikes = self.n_spikes;
            reference.t_isi = self.t_isi;
            reference.t_emu = self.t_emu;
            reference.dt = self.dt;
            reference.weight_scale = None;
            let net = reference.network_config()?;
            out.sigma_i = Some(calibrate_sigma_i(&net, THRESHOLD_WEIGHT_TARGET, &reference.train(), reference.t_emu)?);
        }
        Ok(out)
    }

    pub fn is_resolved(&self) -> bool {
        self.weight_scale.is_some() && self.sigma_i.is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_scalar(s: &str) -> Value {
    let s = s.trim();
    serde_json::from_str::<Value>(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

fn parse_key_values(text: &str) -> Result<Map<String, Value>> {
    let mut map = Map::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
        map.insert(k.trim().to_string(), parse_scalar(v));
    }
    Ok(map)
}

fn guess_key(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<config>").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_parameter_set_one() {
        let c = ExperimentConfig::default();
        assert_eq!((c.tau_mem, c.tau_ref, c.tau_syn), (28.5, 4.0, 1.8));
        assert_eq!((c.v_leak, c.v_reset, c.v_thresh), (0.62, 0.36, 1.28));
        assert_eq!((c.eta_plus, c.tau_plus), (72.0, 64.0));
        assert_eq!((c.n_spikes, c.t_isi, c.t_emu), (20, 10.0, 200.0));
        assert_eq!((c.w, c.sigma_w), (14.0, 2.0));
        assert_eq!((c.field, c.v_ball, c.v_p, c.r_b, c.r_p), (1.0, 0.025, 0.05, 0.02, 0.20));
        assert_eq!((c.gamma, c.beta), (0.5, 0.125));
        c.validate().unwrap();
    }

    #[test]
    fn other_sets() {
        let c = ExperimentConfig::preset(2);
        assert_eq!((c.tau_mem, c.tau_ref, c.tau_syn, c.eta_plus, c.tau_plus), (18.4, 14.3, 2.4, 114.0, 80.0));
        let c = ExperimentConfig::preset(3);
        assert_eq!((c.v_leak, c.v_reset, c.v_thresh, c.eta_plus, c.tau_plus), (0.87, 0.30, 1.21, 70.0, 60.0));
    }

    #[test]
    fn partial_json_and_key_values() {
        let c = ExperimentConfig::from_text(r#"{"beta": 0.25, "profile": "ideal", "seed_env": 9}"#).unwrap();
        assert_eq!(c.beta, 0.25);
        assert_eq!(c.cv_sensor, 0.0);
        assert_eq!(c.seed_env, 9);
        let c = ExperimentConfig::from_text("# comment\nparam_set = 2\ngamma = 0.25\nupdate_mode = active-row\n").unwrap();
        assert_eq!(c.tau_mem, 18.4);
        assert_eq!(c.gamma, 0.25);
        assert_eq!(c.update_mode, UpdateMode::ActiveRow);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_text(r#"{"betta": 0.1}"#).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("betta"));
        let err = ExperimentConfig::from_text("tau_memm = 3").unwrap_err();
        assert!(err.to_string().contains("tau_memm"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_text(r#"{"gamma": 0}"#).is_err());
        assert!(ExperimentConfig::from_text(r#"{"T_emu": 100}"#).is_err());
        assert!(ExperimentConfig::from_text(r#"{"tau_syn": 28.5}"#).is_err());
        assert!(ExperimentConfig::from_text(r#"{"param_set": 4}"#).is_err());
        assert!(ExperimentConfig::from_text(r#"{"profile": "calibrated", "cv_time_constants": 0.2}"#).is_err());
    }

    #[test]
    fn operating_point_change_clears_weight_scale() {
        let c = ExperimentConfig::from_text(r#"{"tau_mem": 20.0}"#).unwrap();
        assert!(c.weight_scale.is_none());
        assert_eq!(c.sigma_i, Some(FROZEN_SIGMA_I));
        let c = ExperimentConfig::from_text(r#"{"tau_mem": 20.0, "sigma_i": 0.0}"#).unwrap();
        assert_eq!(c.sigma_i, Some(0.0));
        let c = ExperimentConfig::default().with_override("dt", "0.05").unwrap();
        assert!(c.weight_scale.is_none());
        let c = ExperimentConfig::default().with_override("beta", "0").unwrap();
        assert_eq!(c.weight_scale, ExperimentConfig::default().weight_scale);
    }

    #[test]
    fn param_set_override_loads_the_preset() {
        let c = ExperimentConfig::default().with_override("beta", "0.25").unwrap();
        let c = c.with_override("profile", "uncalibrated").unwrap();
        let c = c.with_override("param_set", "2").unwrap();
        assert_eq!((c.param_set, c.tau_mem, c.eta_plus), (2, 18.4, 114.0));
        assert_eq!(c.weight_scale, Some(FROZEN_WEIGHT_SCALE[1]));
        assert_eq!((c.beta, c.profile), (0.25, ProfileName::Uncalibrated));
        let u = ExperimentConfig::preset(2);
        assert_eq!(c.with_override("param_set", "1").unwrap().tau_mem, ExperimentConfig::preset(1).tau_mem);
        assert_eq!(ExperimentConfig::preset(1).with_override("param_set", "2").unwrap(), u);
    }

    #[test]
    fn json_round_trip() {
        let c = ExperimentConfig::preset(3);
        assert_eq!(ExperimentConfig::from_text(&c.to_json()).unwrap(), c);
    }
}
