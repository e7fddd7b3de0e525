use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// The six LIF constants plus the (normalized) membrane capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    pub tau_mem: f64,
    pub tau_syn: f64,
    pub tau_ref: f64,
    pub v_leak: f64,
    pub v_thresh: f64,
    pub v_reset: f64,
    pub c_mem: f64,
}

impl LifParams {
    /// Standard parameter set.
    pub fn set1() -> Self {
        LifParams {
            tau_mem: 28.5,
            tau_syn: 1.8,
            tau_ref: 4.0,
            v_leak: 0.62,
            v_thresh: 1.28,
            v_reset: 0.36,
            c_mem: 1.0,
        }
    }

    pub fn set2() -> Self {
        LifParams {
            tau_mem: 18.4,
            tau_syn: 2.4,
            tau_ref: 14.3,
            v_leak: 0.56,
            v_thresh: 1.31,
            v_reset: 0.36,
            c_mem: 1.0,
        }
    }

    pub fn set3() -> Self {
        LifParams {
            tau_mem: 24.8,
            tau_syn: 1.4,
            tau_ref: 13.8,
            v_leak: 0.87,
            v_thresh: 1.21,
            v_reset: 0.30,
            c_mem: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("tau_mem", self.tau_mem),
            ("tau_syn", self.tau_syn),
            ("tau_ref", self.tau_ref),
            ("c_mem", self.c_mem),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.v_reset <= self.v_leak && self.v_leak < self.v_thresh) {
            return Err(Error::config(
                "v_leak",
                format!(
                    "need v_reset <= v_leak < v_thresh, got {} / {} / {}",
                    self.v_reset, self.v_leak, self.v_thresh
                ),
            ));
        }
        if (self.tau_mem - self.tau_syn).abs() <= 1e-9 * self.tau_mem {
            return Err(Error::config("tau_syn", "tau_syn must differ from tau_mem"));
        }
        Ok(())
    }
}

/// Exact one-step propagator of the linear subthreshold dynamics
///
/// ```text
/// dv/dt = -(v - v_leak)/tau_mem + (i_syn + i_ext)/c_mem
/// di_syn/dt = -i_syn/tau_syn
/// ```
///
/// with `i_ext` held constant over the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    /// i_syn decay.
    pub p11: f64,
    /// Membrane decay.
    pub p22: f64,
    /// i_syn -> v coupling.
    pub p21: f64,
    /// Constant current -> v.
    pub p20: f64,
}

impl Propagator {
    pub fn new(p: &LifParams, h: f64) -> Self {
        let em1_m = (-h / p.tau_mem).exp_m1();
        let em1_s = (-h / p.tau_syn).exp_m1();
        let p21 = p.tau_mem * p.tau_syn / (p.c_mem * (p.tau_mem - p.tau_syn)) * (em1_m - em1_s);
        Propagator {
            p11: 1.0 + em1_s,
            p22: 1.0 + em1_m,
            p21,
            p20: -p.tau_mem / p.c_mem * em1_m,
        }
    }
}

/// Snapshot of one neuron's dynamic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    pub v: f64,
    pub i_syn: f64,
    /// Remaining refractory time (us).
    pub refrac_remaining: f64,
    pub spike_count: u8,
}
