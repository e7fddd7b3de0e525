//! Seed-swept studies: learning curves, the no-noise control, neuron
//! shuffling, calibration ablation, threshold correlation and chip transfer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::agent::{substrate_for, Experiment};
use crate::config::ExperimentConfig;
use crate::noise::ProfileName;
use crate::rng::{derive_seed, keyed, Stream};
use crate::snn::{measure_spiking_threshold, WeightMatrix, N_INPUTS, N_NEURONS, NO_THRESHOLD};
use crate::{Error, Result};

/// Presentations per state when measuring reward with learning off.
pub const DEFAULT_EVAL_ROUNDS: usize = 8;
/// Trials per weight in the spiking-threshold measurement.
pub const THRESHOLD_TRIALS: usize = 100;
/// Length of the early phase the final reward is compared against.
pub const EARLY_PHASE: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyName {
    LearningCurve,
    NoNoiseControl,
    Shuffle,
    CalibrationCompare,
    ThresholdCorrelation,
    ChipTransfer,
}

impl StudyName {
    pub const ALL: [StudyName; 6] = [
        StudyName::LearningCurve,
        StudyName::NoNoiseControl,
        StudyName::Shuffle,
        StudyName::CalibrationCompare,
        StudyName::ThresholdCorrelation,
        StudyName::ChipTransfer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StudyName::LearningCurve => "learning-curve",
            StudyName::NoNoiseControl => "no-noise-control",
            StudyName::Shuffle => "shuffle",
            StudyName::CalibrationCompare => "calibration-compare",
            StudyName::ThresholdCorrelation => "threshold-correlation",
            StudyName::ChipTransfer => "chip-transfer",
        }
    }

    /// Iterations per trial in the reference protocol.
    pub fn default_iterations(&self) -> u64 {
        match self {
            StudyName::LearningCurve | StudyName::NoNoiseControl => 100_000,
            _ => 50_000,
        }
    }

    pub fn default_trials(&self) -> usize {
        match self {
            StudyName::Shuffle => 100,
            StudyName::CalibrationCompare => 20,
            StudyName::ChipTransfer => 5,
            _ => 10,
        }
    }
}

impl fmt::Display for StudyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyName::ALL.into_iter().find(|n| n.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = StudyName::ALL.iter().map(|n| n.as_str()).collect();
            Error::config("study", format!("unknown study {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub study: StudyName,
    pub n_trials: usize,
    pub n_iterations: u64,
    pub base: ExperimentConfig,
    /// `key = value` overrides applied to `base` (and to every cell config
    /// of the chip-transfer grid).
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    #[serde(default = "default_eval_rounds")]
    pub eval_rounds: usize,
    /// Curve sampling interval; 0 picks about 500 points.
    #[serde(default)]
    pub curve_every: u64,
}

fn default_eval_rounds() -> usize {
    DEFAULT_EVAL_ROUNDS
}

impl StudySpec {
    /// The reference protocol of `study` on parameter set 1, with the noise
    /// profile the study calls for.
    pub fn new(study: StudyName) -> Self {
        let mut base = ExperimentConfig::default();
        match study {
            StudyName::NoNoiseControl => {
                base.set_profile(ProfileName::Ideal);
                base.sigma_i = Some(0.0);
            }
            StudyName::Shuffle | StudyName::ThresholdCorrelation => base.set_profile(ProfileName::Uncalibrated),
            _ => {}
        }
        StudySpec {
            study,
            n_trials: study.default_trials(),
            n_iterations: study.default_iterations(),
            base,
            overrides: BTreeMap::new(),
            eval_rounds: DEFAULT_EVAL_ROUNDS,
            curve_every: 0,
        }
    }

    pub fn with_trials(mut self, n: usize) -> Self {
        self.n_trials = n;
        self
    }

    pub fn with_iterations(mut self, n: u64) -> Self {
        self.n_iterations = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::config("n_trials", "a study needs at least one trial"));
        }
        if self.eval_rounds == 0 {
            return Err(Error::config("eval_rounds", "must be at least 1"));
        }
        self.config().map(|_| ())
    }

    /// `cfg` with the spec's overrides and iteration count applied, resolved.
    pub fn apply_overrides(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig> {
        for (k, v) in &self.overrides {
            cfg = cfg.with_override(k, v)?;
        }
        cfg.iterations = self.n_iterations;
        cfg.resolve()
    }

    /// Base config with overrides applied and calibration resolved.
    pub fn config(&self) -> Result<ExperimentConfig> {
        self.apply_overrides(self.base.clone())
    }

    fn curve_every(&self) -> u64 {
        if self.curve_every > 0 {
            self.curve_every
        } else {
            (self.n_iterations / 500).max(1)
        }
    }
}

/// Config of trial `i`: fresh temporal and environment seeds, and a fresh
/// chip when `vary_chip` is set. Trial seeds depend only on the base seeds
/// and `i`, so arms of a comparison that share a base are paired.
pub fn trial_config(base: &ExperimentConfig, i: usize, vary_chip: bool) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.seed_temporal = derive_seed(base.seed_temporal, i as u64);
    cfg.seed_env = derive_seed(base.seed_env, i as u64);
    if vary_chip {
        cfg.seed_fp = derive_seed(base.seed_fp, i as u64);
    }
    cfg
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (0 for fewer than two values).
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Distribution {
    pub fn new(values: Vec<f64>) -> Self {
        Distribution {
            mean: mean(&values),
            std: std_dev(&values),
            values,
        }
    }
}

/// Mean weight on and next to the diagonal minus mean weight outside the
/// reward window, for a row-major 32x32 matrix (row = input, column = unit).
pub fn dominance_statistic(w: &[f64]) -> f64 {
    assert_eq!(w.len(), N_INPUTS * N_NEURONS);
    let (mut near, mut n_near, mut far, mut n_far) = (0.0, 0, 0.0, 0);
    for m in 0..N_INPUTS {
        for n in 0..N_NEURONS {
            let d = m.abs_diff(n);
            let v = w[m * N_NEURONS + n];
            if d <= 1 {
                near += v;
                n_near += 1;
            } else if d > 3 {
                far += v;
                n_far += 1;
            }
        }
    }
    near / n_near as f64 - far / n_far as f64
}

fn as_f64(w: &WeightMatrix) -> Vec<f64> {
    w.as_slice().iter().map(|&x| x as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrixReport {
    /// Element-wise mean, row-major.
    pub mean: Vec<f64>,
    pub dominance: f64,
}

pub fn study_weight_matrix(matrices: &[WeightMatrix]) -> Result<WeightMatrixReport> {
    if matrices.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut mean = vec![0.0; N_INPUTS * N_NEURONS];
    for w in matrices {
        for (acc, &x) in mean.iter_mut().zip(w.as_slice()) {
            *acc += x as f64;
        }
    }
    mean.iter_mut().for_each(|x| *x /= matrices.len() as f64);
    Ok(WeightMatrixReport {
        dominance: dominance_statistic(&mean),
        mean,
    })
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed_fp: u64,
    pub seed_temporal: u64,
    pub seed_env: u64,
    pub mean_expected_reward: f64,
    pub performance: f64,
    /// Largest ⟨R̄⟩ seen during the first 1000 iterations.
    pub early_max: f64,
    pub dominance: f64,
    pub weights_checksum: String,
    #[serde(skip)]
    pub weights: Option<WeightMatrix>,
    /// (⟨R̄⟩, P) every `curve_every` iterations, starting at iteration 0.
    #[serde(skip)]
    pub curve: Vec<(f64, f64)>,
    /// ⟨R̄⟩ after each of the first 1000 iterations.
    #[serde(skip)]
    pub early: Vec<f64>,
}

/// Train one experiment from scratch, recording its curve.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, curve_every: u64) -> Result<TrialResult> {
    let mut exp = Experiment::new(cfg)?;
    train(&mut exp, cfg, trial, cfg.iterations, curve_every)
}

fn train(exp: &mut Experiment, cfg: &ExperimentConfig, trial: usize, n: u64, curve_every: u64) -> Result<TrialResult> {
    let mut curve = vec![(exp.mean_expected_reward(), exp.performance())];
    let mut early = Vec::with_capacity(EARLY_PHASE.min(n) as usize);
    let start = exp.iteration();
    exp.run(n, |log| {
        let i = log.iteration - start;
        if i <= EARLY_PHASE {
            early.push(log.mean_expected_reward);
        }
        if i % curve_every == 0 {
            curve.push((log.mean_expected_reward, log.performance));
        }
    })?;
    let weights = exp.weights().clone();
    Ok(TrialResult {
        trial,
        seed_fp: cfg.seed_fp,
        seed_temporal: cfg.seed_temporal,
        seed_env: cfg.seed_env,
        mean_expected_reward: exp.mean_expected_reward(),
        performance: exp.performance(),
        early_max: early.iter().copied().fold(0.0, f64::max),
        dominance: dominance_statistic(&as_f64(&weights)),
        weights_checksum: weights.checksum(),
        weights: Some(weights),
        curve,
        early,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub iterations: Vec<u64>,
    pub mean_reward: Vec<f64>,
    pub std_reward: Vec<f64>,
    pub mean_performance: Vec<f64>,
    pub std_performance: Vec<f64>,
}

impl Curve {
    fn aggregate(trials: &[TrialResult], every: u64) -> Curve {
        let len = trials.iter().map(|t| t.curve.len()).min().unwrap_or(0);
        let column = |k: usize, f: fn(&(f64, f64)) -> f64| -> Vec<f64> { trials.iter().map(|t| f(&t.curve[k])).collect() };
        let mut c = Curve {
            iterations: (0..len as u64).map(|k| k * every).collect(),
            mean_reward: vec![],
            std_reward: vec![],
            mean_performance: vec![],
            std_performance: vec![],
        };
        for k in 0..len {
            let r = column(k, |p| p.0);
            let p = column(k, |p| p.1);
            c.mean_reward.push(mean(&r));
            c.std_reward.push(std_dev(&r));
            c.mean_performance.push(mean(&p));
            c.std_performance.push(std_dev(&p));
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub study: StudyName,
    pub curve: Curve,
    pub trials: Vec<TrialResult>,
    pub final_reward: Distribution,
    pub final_performance: Distribution,
    /// Largest trial-mean ⟨R̄⟩ during the first 1000 iterations.
    pub early_max_mean_reward: f64,
    pub weight_matrix: WeightMatrixReport,
}

fn curve_report(spec: &StudySpec, cfg: &ExperimentConfig) -> Result<LearningCurveReport> {
    let every = spec.curve_every();
    let trials: Vec<TrialResult> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| run_trial(&trial_config(cfg, i, false), i, every))
        .collect::<Result<_>>()?;
    let early_len = trials.iter().map(|t| t.early.len()).min().unwrap_or(0);
    let early_max_mean_reward = (0..early_len)
        .map(|k| mean(&trials.iter().map(|t| t.early[k]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let matrices: Vec<WeightMatrix> = trials.iter().filter_map(|t| t.weights.clone()).collect();
    Ok(LearningCurveReport {
        study: spec.study,
        curve: Curve::aggregate(&trials, every),
        final_reward: Distribution::new(trials.iter().map(|t| t.mean_expected_reward).collect()),
        final_performance: Distribution::new(trials.iter().map(|t| t.performance).collect()),
        early_max_mean_reward,
        weight_matrix: study_weight_matrix(&matrices)?,
        trials,
    })
}

/// Mean and spread of ⟨R̄⟩ and P over `n_trials` runs on one chip.
pub fn study_learning_curve(spec: &StudySpec) -> Result<LearningCurveReport> {
    spec.validate()?;
    curve_report(spec, &spec.config()?)
}

/// The learning-curve protocol on a noise-free ideal substrate.
pub fn study_no_noise_control(spec: &StudySpec) -> Result<LearningCurveReport> {
    spec.validate()?;
    let mut base = spec.base.clone();
    base.set_profile(ProfileName::Ideal);
    base.sigma_i = Some(0.0);
    let spec = StudySpec { base, ..spec.clone() };
    let cfg = spec.config()?;
    if cfg.sigma_i != Some(0.0) || cfg.profile != ProfileName::Ideal {
        return Err(Error::config("sigma_i", "the no-noise control runs without noise"));
    }
    curve_report(&spec, &cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleTrial {
    pub trial: usize,
    pub permutation: Vec<usize>,
    pub baseline: (f64, f64),
    pub shuffled: (f64, f64),
    pub relearned: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    /// The training run that produced the learned matrix.
    pub learned: TrialResult,
    pub trials: Vec<ShuffleTrial>,
    pub baseline: Distribution,
    pub shuffled: Distribution,
    pub relearned: Distribution,
}

/// Uniform random permutation of the 32 units for trial `i`.
pub fn random_permutation(seed: u64, i: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..N_NEURONS).collect();
    perm.shuffle(&mut keyed(seed, Stream::Permutation, i as u32));
    perm
}

/// Learn once, then per trial: measure, move the logical units onto
/// permuted physical neurons, measure again, relearn and measure again.
pub fn study_shuffle(spec: &StudySpec) -> Result<ShuffleReport> {
    spec.validate()?;
    let cfg = spec.config()?;
    let perms: Vec<Vec<usize>> = (0..spec.n_trials).map(|i| random_permutation(cfg.seed_temporal, i)).collect();
    study_shuffle_with(spec, &perms)
}

/// [`study_shuffle`] with explicit permutations (one trial each).
pub fn study_shuffle_with(spec: &StudySpec, perms: &[Vec<usize>]) -> Result<ShuffleReport> {
    spec.validate()?;
    let cfg = spec.config()?;
    let learned = run_trial(&cfg, 0, spec.curve_every())?;
    let weights = learned.weights.clone().expect("trained weights");
    let chip = substrate_for(&cfg)?;
    let trials: Vec<ShuffleTrial> = perms
        .par_iter()
        .enumerate()
        .map(|(i, perm)| -> Result<ShuffleTrial> {
            let tcfg = trial_config(&cfg, i + 1, false);
            let baseline = Experiment::with_parts(&tcfg, &chip, weights.clone())?.evaluate(spec.eval_rounds)?;
            let mut exp = Experiment::with_parts(&tcfg, &chip.permute_neurons(perm), weights.clone())?;
            let shuffled = exp.evaluate(spec.eval_rounds)?;
            exp.run(spec.n_iterations, |_| {})?;
            let relearned = exp.evaluate(spec.eval_rounds)?;
            Ok(ShuffleTrial {
                trial: i,
                permutation: perm.clone(),
                baseline,
                shuffled,
                relearned,
            })
        })
        .collect::<Result<_>>()?;
    let dist = |f: fn(&ShuffleTrial) -> f64| Distribution::new(trials.iter().map(f).collect());
    Ok(ShuffleReport {
        baseline: dist(|t| t.baseline.0),
        shuffled: dist(|t| t.shuffled.0),
        relearned: dist(|t| t.relearned.0),
        learned,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub profile: ProfileName,
    pub trials: Vec<TrialResult>,
    pub reward: Distribution,
    pub performance: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub arms: Vec<ArmReport>,
    /// Calibrated minus uncalibrated mean ⟨R̄⟩ (0 if either arm is absent).
    pub gap: f64,
}

impl CalibrationReport {
    pub fn arm(&self, profile: ProfileName) -> Option<&ArmReport> {
        self.arms.iter().find(|a| a.profile == profile)
    }
}

/// Paired comparison of the calibrated and uncalibrated profiles: trial `i`
/// uses the same chip and temporal and environment seeds in both arms.
pub fn study_calibration_compare(spec: &StudySpec) -> Result<CalibrationReport> {
    study_profiles(spec, &[ProfileName::Calibrated, ProfileName::Uncalibrated])
}

/// [`study_calibration_compare`] over an arbitrary set of profiles.
pub fn study_profiles(spec: &StudySpec, profiles: &[ProfileName]) -> Result<CalibrationReport> {
    spec.validate()?;
    let every = spec.curve_every();
    let arm_cfgs: Vec<(ProfileName, ExperimentConfig)> = profiles
        .iter()
        .map(|&p| {
            let mut base = spec.base.clone();
            base.set_profile(p);
            Ok((p, spec.apply_overrides(base)?))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..arm_cfgs.len()).flat_map(|a| (0..spec.n_trials).map(move |i| (a, i))).collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(a, i)| run_trial(&trial_config(&arm_cfgs[a].1, i, true), i, every))
        .collect::<Result<_>>()?;
    let mut arms = Vec::new();
    for (a, chunk) in results.chunks(spec.n_trials).enumerate() {
        arms.push(ArmReport {
            profile: arm_cfgs[a].0,
            reward: Distribution::new(chunk.iter().map(|t| t.mean_expected_reward).collect()),
            performance: Distribution::new(chunk.iter().map(|t| t.performance).collect()),
            trials: chunk.to_vec(),
        });
    }
    let m = |p| arms.iter().find(|a: &&ArmReport| a.profile == p).map(|a| a.reward.mean);
    let gap = match (m(ProfileName::Calibrated), m(ProfileName::Uncalibrated)) {
        (Some(c), Some(u)) => c - u,
        _ => 0.0,
    };
    Ok(CalibrationReport { arms, gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value of the t test for zero correlation.
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with its t-test p-value.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("weights have zero variance"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("thresholds have zero variance"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(Correlation { r, p, n })
}

/// Pool (unrewarded weight, threshold weight) pairs over learned matrices
/// and their chips' measured thresholds. Unrewarded synapses are those
/// with |m - n| > 3; neurons without a threshold are left out.
pub fn threshold_correlation(samples: &[(WeightMatrix, Vec<u8>)]) -> Result<Correlation> {
    let (mut ws, mut ts) = (Vec::new(), Vec::new());
    for (w, thresholds) in samples {
        assert_eq!(thresholds.len(), N_NEURONS);
        for (n, &t) in thresholds.iter().enumerate() {
            if t == NO_THRESHOLD {
                continue;
            }
            for m in (0..N_INPUTS).filter(|m| m.abs_diff(n) > 3) {
                ws.push(w.get(m, n) as f64);
                ts.push(t as f64);
            }
        }
    }
    pearson(&ws, &ts)
}

/// Spiking-threshold weights of the chip a config describes.
pub fn chip_thresholds(cfg: &ExperimentConfig) -> Result<Vec<u8>> {
    let cfg = cfg.resolve()?;
    measure_spiking_threshold(
        &cfg.network_config()?,
        &substrate_for(&cfg)?,
        &cfg.train(),
        cfg.t_emu,
        THRESHOLD_TRIALS,
        derive_seed(cfg.seed_temporal, 0x7468),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub correlation: Correlation,
    pub trials: Vec<TrialResult>,
    pub thresholds: Vec<Vec<u8>>,
}

/// Learn on `n_trials` chips and correlate unrewarded weights with the
/// chips' spiking thresholds.
pub fn study_threshold_correlation(spec: &StudySpec) -> Result<ThresholdReport> {
    spec.validate()?;
    let cfg = spec.config()?;
    let every = spec.curve_every();
    let out: Vec<(TrialResult, Vec<u8>)> = (0..spec.n_trials)
        .into_par_iter()
        .map(|i| {
            let tcfg = trial_config(&cfg, i, true);
            Ok((run_trial(&tcfg, i, every)?, chip_thresholds(&tcfg)?))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(WeightMatrix, Vec<u8>)> =
        out.iter().map(|(t, th)| (t.weights.clone().expect("trained weights"), th.clone())).collect();
    let correlation = threshold_correlation(&samples)?;
    let (trials, thresholds) = out.into_iter().unzip();
    Ok(ThresholdReport {
        correlation,
        trials,
        thresholds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub chip: usize,
    pub param_set: u8,
    pub seed_fp: u64,
    pub reward: Distribution,
    pub performance: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Row `c`, column `s`: chip `c` running parameter set `s + 1`. Chip
    /// `s` is the native chip of set `s + 1`.
    pub cells: Vec<Vec<TransferCell>>,
}

impl TransferReport {
    pub fn mean(&self, chip: usize, set_index: usize) -> f64 {
        self.cells[chip][set_index].reward.mean
    }
}

/// The three virtual chips: the base chip and two derived from it.
pub fn transfer_chips(seed_fp: u64) -> [u64; 3] {
    [seed_fp, derive_seed(seed_fp, 1), derive_seed(seed_fp, 2)]
}

/// Every parameter set on every chip, `n_trials` runs per cell.
pub fn study_chip_transfer(spec: &StudySpec) -> Result<TransferReport> {
    spec.validate()?;
    let chips = transfer_chips(spec.base.seed_fp);
    let every = spec.curve_every();
    let mut cell_cfgs = Vec::new();
    for &seed_fp in &chips {
        for set in 1..=3u8 {
            let mut c = ExperimentConfig::preset(set);
            c.set_profile(spec.base.profile);
            c.seed_fp = seed_fp;
            c.seed_temporal = spec.base.seed_temporal;
            c.seed_env = spec.base.seed_env;
            cell_cfgs.push(spec.apply_overrides(c)?);
        }
    }
    let jobs: Vec<(usize, usize)> = (0..9).flat_map(|c| (0..spec.n_trials).map(move |i| (c, i))).collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(c, i)| run_trial(&trial_config(&cell_cfgs[c], i, false), i, every))
        .collect::<Result<_>>()?;
    let mut cells: Vec<Vec<TransferCell>> = vec![Vec::new(); 3];
    for (c, chunk) in results.chunks(spec.n_trials).enumerate() {
        cells[c / 3].push(TransferCell {
            chip: c / 3,
            param_set: (c % 3) as u8 + 1,
            seed_fp: chips[c / 3],
            reward: Distribution::new(chunk.iter().map(|t| t.mean_expected_reward).collect()),
            performance: Distribution::new(chunk.iter().map(|t| t.performance).collect()),
        });
    }
    Ok(TransferReport { cells })
}

/// Any study's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StudyReport {
    Curve(LearningCurveReport),
    Shuffle(ShuffleReport),
    Calibration(CalibrationReport),
    Threshold(ThresholdReport),
    Transfer(TransferReport),
}

pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    Ok(match spec.study {
        StudyName::LearningCurve => StudyReport::Curve(study_learning_curve(spec)?),
        StudyName::NoNoiseControl => StudyReport::Curve(study_no_noise_control(spec)?),
        StudyName::Shuffle => StudyReport::Shuffle(study_shuffle(spec)?),
        StudyName::CalibrationCompare => StudyReport::Calibration(study_calibration_compare(spec)?),
        StudyName::ThresholdCorrelation => StudyReport::Threshold(study_threshold_correlation(spec)?),
        StudyName::ChipTransfer => StudyReport::Transfer(study_chip_transfer(spec)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::initial_weights;
    use proptest::prelude::*;

    fn tiny(study: StudyName) -> StudySpec {
        StudySpec::new(study).with_trials(2).with_iterations(30)
    }

    #[test]
    fn study_names_round_trip() {
        for s in StudyName::ALL {
            assert_eq!(s.to_string().parse::<StudyName>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        let err = "fig4".parse::<StudyName>().unwrap_err();
        assert!(err.to_string().contains("learning-curve"));
    }

    #[test]
    fn zero_trials_is_an_error() {
        for s in StudyName::ALL {
            let spec = StudySpec::new(s).with_trials(0);
            assert!(run_study(&spec).unwrap_err().is_config());
        }
    }

    #[test]
    fn identity_like_matrix_dominance() {
        let mut w = vec![0.0; 1024];
        for i in 0..32 {
            w[i * 32 + i] = 63.0;
        }
        // the |m-n| <= 1 band has 32 + 2*31 entries
        assert!((dominance_statistic(&w) - 63.0 * 32.0 / 94.0).abs() < 1e-12);
        let mut band = vec![0.0; 1024];
        for m in 0..32usize {
            for n in 0..32usize {
                if m.abs_diff(n) <= 1 {
                    band[m * 32 + n] = 63.0;
                }
            }
        }
        assert_eq!(dominance_statistic(&band), 63.0);
        assert_eq!(dominance_statistic(&[14.0; 1024]), 0.0);
    }

    #[test]
    fn random_init_has_no_dominance() {
        let cfg = ExperimentConfig::default();
        let stats: Vec<f64> = (0..200)
            .map(|i| dominance_statistic(&as_f64(&initial_weights(&trial_config(&cfg, i, false)))))
            .collect();
        // statistic of i.i.d. N(14, 2) entries: std = 2 * sqrt(1/94 + 1/812)
        let sd = 2.0 * (1.0f64 / 94.0 + 1.0 / 812.0).sqrt();
        assert!(mean(&stats).abs() < 4.0 * sd / (200f64).sqrt());
        assert!((std_dev(&stats) - sd).abs() < 0.2 * sd, "{}", std_dev(&stats));
    }

    #[test]
    fn pearson_exact_cases() {
        let t: Vec<f64> = (0..50).map(|i| (i % 7) as f64 + 10.0).collect();
        let w: Vec<f64> = t.iter().map(|x| x - 2.0).collect();
        let c = pearson(&w, &t).unwrap();
        assert_eq!(c.r, 1.0);
        assert_eq!(c.p, 0.0);
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        assert_eq!(pearson(&neg, &t).unwrap().r, -1.0);
        assert!(matches!(pearson(&w, &vec![3.0; 50]), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn pearson_p_value_against_table() {
        // r = 0.5 with n = 12: t = 1.8257, two-sided p = 0.0979
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mean_x = 6.5;
        let sx = xs.iter().map(|x: &f64| (x - mean_x).powi(2)).sum::<f64>().sqrt();
        // y = 0.5 x~ + sqrt(0.75) e with e orthogonal to x and of equal norm
        let e = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0];
        let proj = xs.iter().zip(&e).map(|(x, e)| (x - mean_x) * e).sum::<f64>() / sx.powi(2);
        let e: Vec<f64> = xs.iter().zip(&e).map(|(x, e)| e - proj * (x - mean_x)).collect();
        let se = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ys: Vec<f64> = xs
            .iter()
            .zip(&e)
            .map(|(x, e)| 0.5 * (x - mean_x) / sx + 0.75f64.sqrt() * e / se)
            .collect();
        let c = pearson(&xs, &ys).unwrap();
        assert!((c.r - 0.5).abs() < 1e-12);
        assert!((c.p - 0.0979).abs() < 5e-4, "{}", c.p);
    }

    #[test]
    fn synthetic_thresholds_correlate_perfectly() {
        let thresholds: Vec<u8> = (0..32).map(|n| 15 + (n % 9) as u8).collect();
        let mut w = WeightMatrix::filled(0);
        for m in 0..32 {
            for n in 0..32 {
                w.set(m, n, thresholds[n] - 2);
            }
        }
        let c = threshold_correlation(&[(w.clone(), thresholds.clone())]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert!(matches!(
            threshold_correlation(&[(w, vec![20; 32])]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn missing_thresholds_are_left_out() {
        let mut thresholds: Vec<u8> = (0..32).map(|n| 15 + (n % 9) as u8).collect();
        let mut w = WeightMatrix::filled(0);
        for m in 0..32 {
            for n in 0..32 {
                w.set(m, n, thresholds[n] - 2);
            }
        }
        thresholds[4] = NO_THRESHOLD;
        w.set(20, 4, 63);
        let c = threshold_correlation(&[(w, thresholds)]).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_iterations_gives_zero_reward() {
        let spec = StudySpec::new(StudyName::LearningCurve).with_trials(1).with_iterations(0);
        let rep = study_learning_curve(&spec).unwrap();
        assert_eq!(rep.final_reward.mean, 0.0);
        assert_eq!(rep.curve.iterations, vec![0]);
    }

    #[test]
    fn trials_are_reproducible_and_distinct() {
        let spec = tiny(StudyName::LearningCurve);
        let a = study_learning_curve(&spec).unwrap();
        let b = study_learning_curve(&spec).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.trials[0].seed_temporal, a.trials[1].seed_temporal);
        assert_eq!(a.trials[0].seed_fp, a.trials[1].seed_fp);
        assert_eq!(a.curve.iterations.len(), 31);
    }

    #[test]
    fn no_noise_control_forces_the_ideal_substrate() {
        let mut spec = tiny(StudyName::NoNoiseControl);
        spec.base.set_profile(ProfileName::Calibrated);
        spec.base.sigma_i = Some(0.3);
        let rep = study_no_noise_control(&spec).unwrap();
        assert_eq!(rep.trials.len(), 2);
        spec.overrides.insert("sigma_i".into(), "0.2".into());
        assert!(study_no_noise_control(&spec).is_err());
    }

    #[test]
    fn identity_permutation_leaves_reward_unchanged() {
        let spec = tiny(StudyName::Shuffle);
        let identity: Vec<usize> = (0..32).collect();
        let rep = study_shuffle_with(&spec, &[identity.clone(), identity]).unwrap();
        for t in &rep.trials {
            assert_eq!(t.baseline, t.shuffled);
        }
        assert_eq!(rep.baseline, rep.shuffled);
    }

    #[test]
    fn calibration_arms_are_paired() {
        let spec = tiny(StudyName::CalibrationCompare);
        let rep = study_calibration_compare(&spec).unwrap();
        let (c, u) = (&rep.arm(ProfileName::Calibrated).unwrap(), &rep.arm(ProfileName::Uncalibrated).unwrap());
        for (a, b) in c.trials.iter().zip(&u.trials) {
            assert_eq!((a.seed_fp, a.seed_temporal, a.seed_env), (b.seed_fp, b.seed_temporal, b.seed_env));
        }
        assert_ne!(c.trials[0].seed_fp, c.trials[1].seed_fp);
        assert!((rep.gap - (c.reward.mean - u.reward.mean)).abs() < 1e-15);
    }

    #[test]
    fn transfer_grid_shape() {
        let spec = StudySpec::new(StudyName::ChipTransfer).with_trials(1).with_iterations(5);
        let rep = study_chip_transfer(&spec).unwrap();
        assert_eq!(rep.cells.len(), 3);
        let chips = transfer_chips(spec.base.seed_fp);
        for (c, row) in rep.cells.iter().enumerate() {
            assert_eq!(row.len(), 3);
            for (s, cell) in row.iter().enumerate() {
                assert_eq!((cell.chip, cell.param_set, cell.seed_fp), (c, s as u8 + 1, chips[c]));
            }
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let mut spec = StudySpec::new(StudyName::Shuffle);
        spec.overrides.insert("beta".into(), "0.25".into());
        let text = serde_json::to_string(&spec).unwrap();
        let back: StudySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.config().unwrap().beta, 0.25);
    }

    proptest! {
        #[test]
        fn permutations_are_bijections(seed in any::<u64>(), i in 0usize..1000) {
            let mut p = random_permutation(seed, i);
            p.sort_unstable();
            prop_assert_eq!(p, (0..32).collect::<Vec<_>>());
        }

        #[test]
        fn dominance_is_shift_invariant(c in 0.0f64..40.0, seed in any::<u64>()) {
            let cfg = ExperimentConfig { seed_temporal: seed, ..ExperimentConfig::default() };
            let w = as_f64(&initial_weights(&cfg));
            let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
            prop_assert!((dominance_statistic(&w) - dominance_statistic(&shifted)).abs() < 1e-9);
        }

        #[test]
        fn pearson_is_bounded(xs in prop::collection::vec(-100.0f64..100.0, 3..40), seed in any::<u64>()) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 60)) & 1) as f64 + i as f64).collect();
            if let Ok(c) = pearson(&xs, &ys) {
                prop_assert!(c.r.abs() <= 1.0);
                prop_assert!((0.0..=1.0).contains(&c.p));
            }
        }
    }
}
