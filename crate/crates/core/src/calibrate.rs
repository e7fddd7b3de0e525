//! Operating-point calibration of the two constants the substrate model
//! leaves open: the weight-to-current gain and the temporal noise amplitude.

use crate::noise::SubstrateNoise;
use crate::snn::{Network, NetworkConfig, SpikeTrain, WeightMatrix, N_NEURONS};
use crate::Result;

/// Noise-free threshold weight targeted by [`crate::snn::calibrate_weight_scale`].
pub const THRESHOLD_WEIGHT_TARGET: u8 = 20;
/// Spike-count standard deviation at the threshold weight targeted by
/// [`calibrate_sigma_i`].
pub const SPIKE_COUNT_STD_TARGET: f64 = 1.0;

const CAL_WINDOWS: usize = 64;
const CAL_SEED: u64 = 0x5EED_CA11;

/// Spike-count mean and standard deviation of nominal neurons driven through
/// one synapse of weight `weight`, pooled over all 32 neurons and `windows`
/// presentations.
pub fn spike_count_stats(
    cfg: &NetworkConfig,
    sigma_i: f64,
    weight: u8,
    train: &SpikeTrain,
    t_emu: f64,
    windows: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let noise = SubstrateNoise::ideal().with_sigma_i(sigma_i);
    let mut weights = WeightMatrix::filled(0);
    for n in 0..N_NEURONS {
        weights.set(0, n, weight);
    }
    let mut net = Network::build(cfg, weights, &noise, seed)?;
    let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0.0);
    for _ in 0..windows {
        let rho = net.emulate_window(0, train, t_emu)?;
        net.read_and_reset_correlations();
        for &r in &rho {
            let r = r as f64;
            sum += r;
            sum2 += r * r;
            count += 1.0;
        }
    }
    let mean = sum / count;
    Ok((mean, ((sum2 / count - mean * mean) * count / (count - 1.0)).max(0.0).sqrt()))
}

/// Temporal noise amplitude giving a spike-count standard deviation of
/// [`SPIKE_COUNT_STD_TARGET`] at `weight` (normally the threshold weight).
/// Uses common random numbers across the bisection so the search is
/// deterministic.
pub fn calibrate_sigma_i(cfg: &NetworkConfig, weight: u8, train: &SpikeTrain, t_emu: f64) -> Result<f64> {
    let std_at = |s: f64| spike_count_stats(cfg, s, weight, train, t_emu, CAL_WINDOWS, CAL_SEED).map(|x| x.1);
    let mut hi = 1e-3;
    while std_at(hi)? < SPIKE_COUNT_STD_TARGET {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(crate::Error::config("sigma_i", "spike-count spread target unreachable"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if std_at(mid)? < SPIKE_COUNT_STD_TARGET {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
