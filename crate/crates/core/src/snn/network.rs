use serde::{Deserialize, Serialize};

use super::gauss::NormalBank;
use super::{
    Correlations, CorrelationSensor, LifParams, NeuronState, Propagator, SensorParams, SpikeCounts,
    SpikeTrain, WeightMatrix, N_INPUTS, N_NEURONS, N_SYNAPSES,
};
use crate::noise::SubstrateNoise;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Reference step for the temporal noise amplitude (us).
pub const DT_REF: f64 = 0.1;

/// Nominal network constants, before per-chip variability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub lif: LifParams,
    pub sensor: SensorParams,
    pub dt: f64,
    /// Synaptic current jump per weight unit (V/us with c_mem = 1).
    pub weight_scale: f64,
}

/// The 32-neuron network, its synapse array and sensors.
///
/// Neuron state is kept as the membrane deviation from the (per-neuron)
/// leak potential so that the exact propagator keeps full relative
/// precision in the decaying tail.
#[derive(Debug, Clone)]
pub struct Network {
    params: Vec<LifParams>,
    prop: Vec<Propagator>,
    ref_steps: [u32; N_NEURONS],
    v_leak: [f64; N_NEURONS],
    /// Threshold and reset, relative to v_leak.
    y_thresh: [f64; N_NEURONS],
    y_reset: [f64; N_NEURONS],
    noise_gain: [f64; N_NEURONS],
    p11: [f64; N_NEURONS],
    p22: [f64; N_NEURONS],
    p21: [f64; N_NEURONS],
    sigma_step: f64,
    noisy: bool,
    avx2: bool,
    noise_rng: NormalBank<N_NEURONS>,

    y: [f64; N_NEURONS],
    i_syn: [f64; N_NEURONS],
    refrac: [u32; N_NEURONS],
    counts: SpikeCounts,

    weights: WeightMatrix,
    sensors: Vec<CorrelationSensor>,
    adc_offset: Vec<f64>,
    adc_estimate: Vec<i32>,

    weight_scale: f64,
    dt: f64,
    t_now: f64,
    noise_buf: [f64; N_NEURONS],
}

impl Network {
    /// Assemble a network at rest on the given virtual chip.
    pub fn build(
        cfg: &NetworkConfig,
        weights: WeightMatrix,
        noise: &SubstrateNoise,
        temporal_seed: u64,
    ) -> Result<Network> {
        cfg.lif.validate()?;
        if !(cfg.weight_scale.is_finite() && cfg.weight_scale >= 0.0) {
            return Err(Error::config("weight_scale", "must be finite and >= 0"));
        }
        if !(noise.sigma_i.is_finite() && noise.sigma_i >= 0.0) {
            return Err(Error::config("sigma_i", "must be finite and >= 0"));
        }
        let params: Vec<LifParams> = (0..N_NEURONS)
            .map(|n| noise.effective_params(&cfg.lif, n))
            .collect();
        for p in &params {
            p.validate()?;
        }
        let min_tau_syn = params.iter().map(|p| p.tau_syn).fold(cfg.lif.tau_syn, f64::min);
        if !(cfg.dt > 0.0 && cfg.dt <= min_tau_syn / 4.0) {
            return Err(Error::StepTooCoarse {
                dt: cfg.dt,
                tau_syn: min_tau_syn,
            });
        }

        let prop: Vec<Propagator> = params.iter().map(|p| Propagator::new(p, cfg.dt)).collect();
        let sigma_step = noise.sigma_i * (DT_REF / cfg.dt).sqrt();
        let mut net = Network {
            ref_steps: std::array::from_fn(|n| (params[n].tau_ref / cfg.dt).round() as u32),
            v_leak: std::array::from_fn(|n| params[n].v_leak),
            y_thresh: std::array::from_fn(|n| params[n].v_thresh - params[n].v_leak),
            y_reset: std::array::from_fn(|n| params[n].v_reset - params[n].v_leak),
            noise_gain: std::array::from_fn(|n| prop[n].p20 * sigma_step),
            p11: std::array::from_fn(|n| prop[n].p11),
            p22: std::array::from_fn(|n| prop[n].p22),
            p21: std::array::from_fn(|n| prop[n].p21),
            sigma_step,
            noisy: sigma_step > 0.0,
            #[cfg(target_arch = "x86_64")]
            avx2: std::arch::is_x86_feature_detected!("avx2"),
            #[cfg(not(target_arch = "x86_64"))]
            avx2: false,
            noise_rng: NormalBank::new(|n| rng::xoshiro_state(temporal_seed, Stream::MembraneNoise, n as u32)),
            prop,
            params,
            y: [0.0; N_NEURONS],
            i_syn: [0.0; N_NEURONS],
            refrac: [0; N_NEURONS],
            counts: [0; N_NEURONS],
            weights,
            sensors: (0..N_SYNAPSES)
                .map(|idx| {
                    let mut s = CorrelationSensor::new(&cfg.sensor);
                    s.eta_plus *= noise.eta_plus[idx];
                    s.tau_plus *= noise.tau_plus[idx];
                    s
                })
                .collect(),
            adc_offset: noise.adc_offset.clone(),
            adc_estimate: (0..N_SYNAPSES).map(|i| noise.adc_offset_estimate(i)).collect(),
            weight_scale: cfg.weight_scale,
            dt: cfg.dt,
            t_now: 0.0,
            noise_buf: [0.0; N_NEURONS],
        };
        net.reset_dynamics();
        Ok(net)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_now(&self) -> f64 {
        self.t_now
    }

    pub fn effective_params(&self, n: usize) -> &LifParams {
        &self.params[n]
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightMatrix {
        &mut self.weights
    }

    pub fn sensor(&self, m: usize, n: usize) -> &CorrelationSensor {
        &self.sensors[m * N_NEURONS + n]
    }

    pub fn spike_counts(&self) -> SpikeCounts {
        self.counts
    }

    pub fn neuron(&self, n: usize) -> NeuronState {
        NeuronState {
            v: self.v_leak[n] + self.y[n],
            i_syn: self.i_syn[n],
            refrac_remaining: self.refrac[n] as f64 * self.dt,
            spike_count: self.counts[n],
        }
    }

    /// Overwrite membrane and synaptic current of neuron `n`.
    pub fn set_neuron(&mut self, n: usize, v: f64, i_syn: f64) {
        self.y[n] = v - self.v_leak[n];
        self.i_syn[n] = i_syn;
        self.refrac[n] = 0;
    }

    /// Return every neuron to rest and clear the spike counters.
    pub fn reset_dynamics(&mut self) {
        self.y = [0.0; N_NEURONS];
        self.i_syn = [0.0; N_NEURONS];
        self.refrac = [0; N_NEURONS];
        self.counts = [0; N_NEURONS];
    }

    /// Inject a presynaptic spike on input row `m` at time `t`.
    pub fn deliver_pre_spike(&mut self, m: usize, t: f64) -> Result<()> {
        if m >= N_INPUTS {
            return Err(Error::IndexOutOfRange {
                what: "row",
                index: m,
                len: N_INPUTS,
            });
        }
        let row = m * N_NEURONS;
        for n in 0..N_NEURONS {
            self.i_syn[n] += self.weight_scale * self.weights.as_slice()[row + n] as f64;
            self.sensors[row + n].on_pre(t);
        }
        Ok(())
    }

    /// Back-propagate a postsynaptic spike of neuron `n` to its column.
    pub fn record_post_spike(&mut self, n: usize, t: f64) -> Result<()> {
        if n >= N_NEURONS {
            return Err(Error::IndexOutOfRange {
                what: "column",
                index: n,
                len: N_NEURONS,
            });
        }
        for m in 0..N_INPUTS {
            self.sensors[m * N_NEURONS + n].on_post(t);
        }
        Ok(())
    }

    fn draw_noise(&mut self) {
        if self.noisy {
            self.noise_rng.fill(&mut self.noise_buf);
        }
    }

    /// Threshold check at the end of a step; returns whether `n` fired.
    #[inline]
    fn check_threshold(&mut self, n: usize) -> bool {
        if self.y[n] >= self.y_thresh[n] {
            self.y[n] = self.y_reset[n];
            self.refrac[n] = self.ref_steps[n];
            self.counts[n] = self.counts[n].saturating_add(1);
            true
        } else {
            false
        }
    }

    /// One full step without input events.
    fn advance(&mut self, fired: &mut [bool; N_NEURONS]) {
        self.draw_noise();
        for n in 0..N_NEURONS {
            let p = &self.prop[n];
            if self.refrac[n] > 0 {
                self.refrac[n] -= 1;
                self.y[n] = self.y_reset[n];
                self.i_syn[n] *= p.p11;
                fired[n] = false;
                continue;
            }
            let noise = if self.noisy { self.noise_gain[n] * self.noise_buf[n] } else { 0.0 };
            self.y[n] = p.p22 * self.y[n] + p.p21 * self.i_syn[n] + noise;
            self.i_syn[n] *= p.p11;
            fired[n] = self.check_threshold(n);
        }
    }

    /// Propagate a fraction `h` of a step; the step's noise current is held.
    fn advance_partial(&mut self, h: f64) {
        let sigma_step = if self.noisy { self.sigma_step } else { 0.0 };
        for n in 0..N_NEURONS {
            let p = Propagator::new(&self.params[n], h);
            if self.refrac[n] > 0 {
                self.i_syn[n] *= p.p11;
                continue;
            }
            let current = sigma_step * self.noise_buf[n];
            self.y[n] = p.p22 * self.y[n] + p.p21 * self.i_syn[n] + p.p20 * current;
            self.i_syn[n] *= p.p11;
        }
    }

    fn finish_step(&mut self, fired: &mut [bool; N_NEURONS]) {
        for n in 0..N_NEURONS {
            if self.refrac[n] > 0 {
                self.refrac[n] -= 1;
                self.y[n] = self.y_reset[n];
                fired[n] = false;
            } else {
                fired[n] = self.check_threshold(n);
            }
        }
    }

    /// Event-free steps `from..to` of the current window (window start `t0`).
    /// Same arithmetic as repeated `advance`, laid out so the per-neuron loop
    /// has no branches and vectorizes.
    fn run_quiet(&mut self, from: usize, to: usize, t0: f64) {
        #[cfg(target_arch = "x86_64")]
        if self.avx2 {
            // SAFETY: the feature was detected in `build`.
            unsafe { self.run_quiet_avx2(from, to, t0) };
            return;
        }
        self.run_quiet_inner(from, to, t0);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_quiet_avx2(&mut self, from: usize, to: usize, t0: f64) {
        self.run_quiet_inner(from, to, t0);
    }

    #[inline(always)]
    fn run_quiet_inner(&mut self, from: usize, to: usize, t0: f64) {
        let (p11, p22, p21) = (self.p11, self.p22, self.p21);
        let (gain, thresh, reset) = (self.noise_gain, self.y_thresh, self.y_reset);
        let (mut y, mut i) = (self.y, self.i_syn);
        // Refractory counters as exact small floats keep every lane f64.
        let mut refrac: [f64; N_NEURONS] = std::array::from_fn(|n| self.refrac[n] as f64);
        let mut z = [0.0; N_NEURONS];
        for s in from..to {
            if self.noisy {
                self.noise_rng.fill(&mut z);
            }
            let mut any = false;
            for n in 0..N_NEURONS {
                let active = refrac[n] == 0.0;
                let next = p22[n] * y[n] + p21[n] * i[n] + gain[n] * z[n];
                y[n] = if active { next } else { reset[n] };
                refrac[n] = if refrac[n] > 0.0 { refrac[n] - 1.0 } else { 0.0 };
                i[n] *= p11[n];
                any |= active & (next >= thresh[n]);
            }
            if any {
                let t = t0 + (s + 1) as f64 * self.dt;
                for n in 0..N_NEURONS {
                    if refrac[n] == 0.0 && y[n] >= thresh[n] {
                        y[n] = reset[n];
                        refrac[n] = self.ref_steps[n] as f64;
                        self.counts[n] = self.counts[n].saturating_add(1);
                        self.sensors_post(n, t);
                    }
                }
            }
        }
        self.y = y;
        self.i_syn = i;
        self.refrac = std::array::from_fn(|n| refrac[n] as u32);
    }

    #[inline]
    fn sensors_post(&mut self, n: usize, t: f64) {
        for m in 0..N_INPUTS {
            self.sensors[m * N_NEURONS + n].on_post(t);
        }
    }

    fn emit(&mut self, fired: &[bool; N_NEURONS], t: f64, out: &mut Vec<(usize, f64)>) {
        for n in (0..N_NEURONS).filter(|&n| fired[n]) {
            out.push((n, t));
            for m in 0..N_INPUTS {
                self.sensors[m * N_NEURONS + n].on_post(t);
            }
        }
    }

    /// Advance all neurons by one step `dt`. Spikes are stamped at the step end.
    pub fn step(&mut self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut fired = [false; N_NEURONS];
        self.advance(&mut fired);
        self.t_now += self.dt;
        self.emit(&fired, self.t_now, &mut out);
        out
    }

    /// Present `train` on input row `m` for a window of `t_emu` us and return
    /// the spike counts. Neurons start the window at rest with cleared counters;
    /// sensor state is left to [`Network::read_and_reset_correlations`].
    pub fn emulate_window(&mut self, m: usize, train: &SpikeTrain, t_emu: f64) -> Result<SpikeCounts> {
        if m >= N_INPUTS {
            return Err(Error::IndexOutOfRange {
                what: "row",
                index: m,
                len: N_INPUTS,
            });
        }
        if let Some(last) = train.last() {
            if last > t_emu {
                return Err(Error::SpikeTrain(format!(
                    "spike at {last} us exceeds window {t_emu} us"
                )));
            }
        }
        self.reset_dynamics();
        let n_steps = (t_emu / self.dt).round() as usize;
        let t0 = self.t_now;
        let eps = 1e-6 * self.dt;
        let times = train.times();
        let mut ev = 0;
        let mut fired = [false; N_NEURONS];
        let mut spikes = Vec::new();

        let mut s = 0;
        while s < n_steps {
            let ts = s as f64 * self.dt;
            while ev < times.len() && times[ev] <= ts + eps {
                self.deliver_pre_spike(m, t0 + times[ev])?;
                ev += 1;
            }
            if ev < times.len() && times[ev] < ts + self.dt - eps {
                // Off-grid input: split the step at each event.
                self.draw_noise();
                let mut t_sub = ts;
                while ev < times.len() && times[ev] < ts + self.dt - eps {
                    self.advance_partial(times[ev] - t_sub);
                    t_sub = times[ev];
                    self.deliver_pre_spike(m, t0 + times[ev])?;
                    ev += 1;
                }
                self.advance_partial(ts + self.dt - t_sub);
                self.finish_step(&mut fired);
                spikes.clear();
                self.emit(&fired, t0 + (s + 1) as f64 * self.dt, &mut spikes);
                s += 1;
                continue;
            }
            // Steps up to the one holding the next event are event-free.
            let next = match times.get(ev) {
                Some(&te) => (((te + eps) / self.dt).floor() as usize).clamp(s + 1, n_steps),
                None => n_steps,
            };
            self.run_quiet(s, next, t0);
            s = next;
        }
        for &t in &times[ev..] {
            self.deliver_pre_spike(m, t0 + t)?;
        }
        self.t_now = t0 + n_steps as f64 * self.dt;

        if let Some(n) = (0..N_NEURONS).find(|&n| !(self.y[n].is_finite() && self.i_syn[n].is_finite())) {
            return Err(Error::NonFinite { neuron: n });
        }
        Ok(self.counts)
    }

    /// Digitize every causal accumulator (offset-corrected, 8 bit, >> 1) and
    /// clear all sensor state.
    pub fn read_and_reset_correlations(&mut self) -> Correlations {
        let mut out = Correlations::zeros();
        for (idx, s) in self.sensors.iter_mut().enumerate() {
            out.0[idx] = s.digitize(self.adc_offset[idx], self.adc_estimate[idx]);
            s.clear();
        }
        out
    }

    /// Digitized causal accumulators without clearing them.
    pub fn peek_correlations(&self) -> Correlations {
        Correlations(
            self.sensors
                .iter()
                .enumerate()
                .map(|(idx, s)| s.digitize(self.adc_offset[idx], self.adc_estimate[idx]))
                .collect(),
        )
    }
}
