//! Per-phase timing of the loop.

use std::fmt::Write as _;
use std::time::Duration;

use neuroloop::agent::Experiment;
use neuroloop::config::ExperimentConfig;
use serde::Serialize;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BenchReport {
    pub iterations: u64,
    /// Mean wall-clock microseconds per iteration.
    pub emulation_us: f64,
    pub plasticity_us: f64,
    pub environment_us: f64,
    pub total_us: f64,
    /// Share of the total spent in the environment.
    pub environment_fraction: f64,
    /// Per-iteration time of the last quarter over the first quarter.
    pub late_over_early: f64,
}

impl BenchReport {
    fn empty() -> Self {
        BenchReport {
            iterations: 0,
            emulation_us: 0.0,
            plasticity_us: 0.0,
            environment_us: 0.0,
            total_us: 0.0,
            environment_fraction: 0.0,
            late_over_early: 1.0,
        }
    }

    pub fn render(&self) -> String {
        if self.iterations == 0 {
            return "no iterations\n".into();
        }
        let mut s = String::new();
        let _ = writeln!(s, "iterations    {}", self.iterations);
        for (name, us) in [
            ("emulation", self.emulation_us),
            ("plasticity", self.plasticity_us),
            ("environment", self.environment_us),
        ] {
            let _ = writeln!(s, "{name:<13} {us:9.2} us/it  {:5.1}%", 100.0 * us / self.total_us);
        }
        let _ = writeln!(s, "total         {:9.2} us/it", self.total_us);
        let _ = writeln!(s, "late/early    {:9.3}", self.late_over_early);
        s
    }
}

fn us(d: Duration, n: u64) -> f64 {
    d.as_secs_f64() * 1e6 / n as f64
}

/// Run `n` iterations with learning on and report the phase split.
pub fn run(cfg: &ExperimentConfig, n: u64) -> neuroloop::Result<BenchReport> {
    if n == 0 {
        return Ok(BenchReport::empty());
    }
    let mut exp = Experiment::new(&cfg.resolve()?)?;
    exp.enable_timing();
    let quarter = (n / 4).max(1);
    let mut marks = Vec::new();
    let mut done = 0;
    while done < n {
        let step = quarter.min(n - done);
        exp.run(step, |_| {})?;
        done += step;
        marks.push((exp.timing().expect("timing on").total(), step));
    }
    let t = exp.timing().expect("timing on");
    let first = us(marks[0].0, marks[0].1);
    let last = match marks.len() {
        1 => first,
        k => us(marks[k - 1].0 - marks[k - 2].0, marks[k - 1].1),
    };
    let total = us(t.total(), n);
    Ok(BenchReport {
        iterations: n,
        emulation_us: us(t.emulation, n),
        plasticity_us: us(t.plasticity, n),
        environment_us: us(t.environment, n),
        total_us: total,
        environment_fraction: us(t.environment, n) / total,
        late_over_early: last / first,
    })
}
