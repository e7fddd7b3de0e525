use super::{Network, NetworkConfig, SpikeTrain, WeightMatrix, MAX_WEIGHT, N_NEURONS};
use crate::noise::SubstrateNoise;
use crate::{Error, Result};

/// Reported when no 6-bit weight reaches the spiking criterion.
pub const NO_THRESHOLD: u8 = 64;

/// Fraction of trials with at least one output spike that defines the
/// spiking-threshold weight.
pub const THRESHOLD_PROBABILITY: f64 = 0.05;

/// Smallest PSC amplitude (per input spike) that makes a noise-free neuron
/// with nominal parameters fire at least once for `train`.
pub fn critical_amplitude(cfg: &NetworkConfig, train: &SpikeTrain, t_emu: f64) -> Result<f64> {
    let fires = |amp: f64| -> Result<bool> {
        let c = NetworkConfig { weight_scale: amp, ..*cfg };
        let mut net = Network::build(&c, WeightMatrix::filled(1), &SubstrateNoise::ideal(), 0)?;
        Ok(net.emulate_window(0, train, t_emu)?[0] > 0)
    };
    let mut hi = 1e-3;
    while !fires(hi)? {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::config("weight_scale", "no finite amplitude makes the neuron fire"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if fires(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Weight scale placing the noise-free threshold weight at `target`: the
/// critical amplitude sits halfway between weights `target - 1` and `target`.
pub fn calibrate_weight_scale(
    cfg: &NetworkConfig,
    train: &SpikeTrain,
    t_emu: f64,
    target: u8,
) -> Result<f64> {
    assert!(target >= 1);
    Ok(critical_amplitude(cfg, train, t_emu)? / (target as f64 - 0.5))
}

/// Per-neuron spiking-threshold weight: the smallest weight for which more
/// than 5% of `trials` presentations of `train` through a single synapse
/// elicit at least one output spike. [`NO_THRESHOLD`] if none does.
pub fn measure_spiking_threshold(
    cfg: &NetworkConfig,
    noise: &SubstrateNoise,
    train: &SpikeTrain,
    t_emu: f64,
    trials: usize,
    temporal_seed: u64,
) -> Result<Vec<u8>> {
    if trials < 100 {
        return Err(Error::config("trials", "threshold measurement needs at least 100 trials"));
    }
    let mut net = Network::build(cfg, WeightMatrix::filled(0), noise, temporal_seed)?;
    let mut thresholds = vec![NO_THRESHOLD; N_NEURONS];
    let needed = (THRESHOLD_PROBABILITY * trials as f64).floor() as usize + 1;
    for w in 0..=MAX_WEIGHT {
        if thresholds.iter().all(|&t| t != NO_THRESHOLD) {
            break;
        }
        for n in 0..N_NEURONS {
            net.weights_mut().set(0, n, w);
        }
        let mut hits = [0usize; N_NEURONS];
        for _ in 0..trials {
            let rho = net.emulate_window(0, train, t_emu)?;
            net.read_and_reset_correlations();
            for n in 0..N_NEURONS {
                hits[n] += (rho[n] > 0) as usize;
            }
        }
        for n in 0..N_NEURONS {
            if thresholds[n] == NO_THRESHOLD && hits[n] >= needed {
                thresholds[n] = w;
            }
        }
    }
    Ok(thresholds)
}
