//! Print the calibrated weight scale for each parameter set and the shared
//! noise amplitude, with the spike-count spread it gives on each set.

use neuroloop::calibrate::{spike_count_stats, THRESHOLD_WEIGHT_TARGET};
use neuroloop::config::ExperimentConfig;

fn main() -> neuroloop::Result<()> {
    for set in 1..=3 {
        let mut cfg = ExperimentConfig::preset(set);
        cfg.weight_scale = None;
        cfg.sigma_i = None;
        let t = std::time::Instant::now();
        let r = cfg.resolve()?;
        let net = r.network_config()?;
        let (mean, std) = spike_count_stats(&net, r.sigma_i.unwrap(), THRESHOLD_WEIGHT_TARGET, &r.train(), r.t_emu, 64, 7)?;
        println!(
            "set {set}: weight_scale {:?} sigma_i {:?}  (count mean {mean:.3} std {std:.3}, {:.1}s)",
            r.weight_scale.unwrap(),
            r.sigma_i.unwrap(),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
