use serde::{Deserialize, Serialize};

/// Nominal sensor constants shared by all synapses before fixed-pattern spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub eta_plus: f64,
    pub tau_plus: f64,
    pub eta_minus: f64,
    pub tau_minus: f64,
}

impl SensorParams {
    /// Causal amplitude and time constant; the anti-causal pair mirrors them.
    pub fn new(eta_plus: f64, tau_plus: f64) -> Self {
        SensorParams {
            eta_plus,
            tau_plus,
            eta_minus: eta_plus,
            tau_minus: tau_plus,
        }
    }
}

/// Synapse-local correlation sensor with non-decaying accumulators.
///
/// Pairing is nearest-neighbour: a post spike pairs with the most recent pre
/// spike, a pre spike with the most recent post spike, and each spike is the
/// partner of at most one later spike of the other kind.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CorrelationSensor {
    pub acc_plus: f64,
    pub acc_minus: f64,
    pub eta_plus: f64,
    pub tau_plus: f64,
    pub eta_minus: f64,
    pub tau_minus: f64,
    pub last_pre: Option<f64>,
    pub last_post: Option<f64>,
    pre_consumed: bool,
    post_consumed: bool,
}

impl CorrelationSensor {
    pub fn new(p: &SensorParams) -> Self {
        CorrelationSensor {
            eta_plus: p.eta_plus,
            tau_plus: p.tau_plus,
            eta_minus: p.eta_minus,
            tau_minus: p.tau_minus,
            ..Default::default()
        }
    }

    #[inline]
    pub fn on_pre(&mut self, t: f64) {
        if let (Some(tp), false) = (self.last_post, self.post_consumed) {
            self.acc_minus += self.eta_minus * (-(t - tp) / self.tau_minus).exp();
            self.post_consumed = true;
        }
        self.last_pre = Some(t);
        self.pre_consumed = false;
    }

    #[inline]
    pub fn on_post(&mut self, t: f64) {
        if let (Some(tp), false) = (self.last_pre, self.pre_consumed) {
            self.acc_plus += self.eta_plus * (-(t - tp) / self.tau_plus).exp();
            self.pre_consumed = true;
        }
        self.last_post = Some(t);
        self.post_consumed = false;
    }

    pub fn clear(&mut self) {
        self.acc_plus = 0.0;
        self.acc_minus = 0.0;
        self.last_pre = None;
        self.last_post = None;
        self.pre_consumed = false;
        self.post_consumed = false;
    }

    /// Offset-corrected 8-bit readout shifted right by one bit, in 0..=127.
    /// A reading clipped at the ADC floor carries no information and stays 0.
    pub fn digitize(&self, adc_offset: f64, offset_estimate: i32) -> u8 {
        let raw = (self.acc_plus + adc_offset).round().clamp(0.0, 255.0) as i32;
        if raw == 0 {
            return 0;
        }
        ((raw - offset_estimate).clamp(0, 255) >> 1) as u8
    }
}
