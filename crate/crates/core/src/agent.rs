//! The closed loop: present the ball column, read the winner, reward,
//! update the baseline and the weights, move the paddle.

use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::noise::{sample_substrate, SubstrateNoise};
use crate::plasticity::{apply_weight_update, LearningParams, RewardState, N_STATES};
use crate::pong::{compute_reward, EnvParams, GameState};
use crate::rng::{keyed, Stream};
use crate::snn::{Network, SpikeCounts, SpikeTrain, WeightMatrix, N_NEURONS};
use crate::Result;

/// Index of the most active unit; ties are broken uniformly at random.
pub fn select_action<R: rand::Rng + ?Sized>(rho: &SpikeCounts, rng: &mut R) -> usize {
    let max = *rho.iter().max().expect("32 counts");
    let mut winners = [0usize; N_NEURONS];
    let mut n = 0;
    for (j, &r) in rho.iter().enumerate() {
        if r == max {
            winners[n] = j;
            n += 1;
        }
    }
    if n == 1 {
        winners[0]
    } else {
        *winners[..n].choose(rng).expect("non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: u64,
    pub k: usize,
    pub j: usize,
    pub rho: SpikeCounts,
    pub reward: f64,
    pub r_bar_k: f64,
    pub mean_expected_reward: f64,
    pub performance: f64,
    pub checksum: Option<String>,
}

/// Wall-clock split of the iterations run so far.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub emulation: Duration,
    pub plasticity: Duration,
    pub environment: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.emulation + self.plasticity + self.environment
    }
}

/// One experiment: a network on one virtual chip, its reward memory and
/// the game.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub network: Network,
    pub rewards: RewardState,
    pub game: GameState,
    learning: LearningParams,
    env: EnvParams,
    train: SpikeTrain,
    t_emu: f64,
    tie_rng: ChaCha8Rng,
    round_rng: ChaCha8Rng,
    env_rng: ChaCha8Rng,
    iteration: u64,
    checksum_every: u64,
    timing: Option<PhaseTimes>,
}

/// The chip described by a config: sampled fixed pattern plus the temporal
/// noise amplitude.
pub fn substrate_for(cfg: &ExperimentConfig) -> Result<SubstrateNoise> {
    let cfg = resolved(cfg)?;
    Ok(sample_substrate(cfg.seed_fp, &cfg.noise_profile()).with_sigma_i(cfg.sigma_i.unwrap_or(0.0)))
}

/// Initial weights: rounded Gaussian draws from the temporal seed.
pub fn initial_weights(cfg: &ExperimentConfig) -> WeightMatrix {
    let mut rng = keyed(cfg.seed_temporal, Stream::InitialWeights, 0);
    WeightMatrix::gaussian(cfg.w, cfg.sigma_w, &mut rng)
}

fn resolved(cfg: &ExperimentConfig) -> Result<std::borrow::Cow<'_, ExperimentConfig>> {
    Ok(if cfg.is_resolved() {
        std::borrow::Cow::Borrowed(cfg)
    } else {
        std::borrow::Cow::Owned(cfg.resolve()?)
    })
}

impl Experiment {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let noise = substrate_for(cfg)?;
        Self::with_parts(cfg, &noise, initial_weights(cfg))
    }

    /// Experiment on an explicit chip and weight matrix; the config supplies
    /// everything else.
    pub fn with_parts(cfg: &ExperimentConfig, noise: &SubstrateNoise, weights: WeightMatrix) -> Result<Self> {
        cfg.validate()?;
        let cfg = resolved(cfg)?;
        let network = Network::build(&cfg.network_config()?, weights, noise, cfg.seed_temporal)?;
        let env = cfg.env();
        let mut env_rng = keyed(cfg.seed_env, Stream::BallReset, 0);
        let game = GameState::new(&env, &mut env_rng);
        Ok(Experiment {
            network,
            rewards: RewardState::new(),
            game,
            learning: cfg.learning(),
            env,
            train: cfg.train(),
            t_emu: cfg.t_emu,
            tie_rng: keyed(cfg.seed_temporal, Stream::ActionTies, 0),
            round_rng: keyed(cfg.seed_temporal, Stream::Rounding, 0),
            env_rng,
            iteration: 0,
            checksum_every: 0,
            timing: None,
        })
    }

    /// Log the weight checksum every `every` iterations (0 = never).
    pub fn set_checksum_every(&mut self, every: u64) {
        self.checksum_every = every;
    }

    pub fn enable_timing(&mut self) {
        self.timing = Some(PhaseTimes::default());
    }

    pub fn timing(&self) -> Option<PhaseTimes> {
        self.timing
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn weights(&self) -> &WeightMatrix {
        self.network.weights()
    }

    pub fn learning(&self) -> &LearningParams {
        &self.learning
    }

    pub fn set_learning(&mut self, learning: LearningParams) {
        self.learning = learning;
    }

    pub fn mean_expected_reward(&self) -> f64 {
        self.rewards.mean_expected_reward()
    }

    pub fn performance(&self) -> f64 {
        self.rewards.performance()
    }

    /// One pass through the loop.
    pub fn run_iteration(&mut self) -> Result<IterationLog> {
        let t0 = self.timing.map(|_| Instant::now());
        let k = self.game.ball_column(&self.env);
        let rho = self.network.emulate_window(k, &self.train, self.t_emu)?;
        let t1 = self.timing.map(|_| Instant::now());

        let j = select_action(&rho, &mut self.tie_rng);
        let reward = compute_reward(j, k);
        let modulator = self.rewards.update_expected_reward(k, reward, self.learning.gamma);
        let a_plus = self.network.read_and_reset_correlations();
        apply_weight_update(
            self.network.weights_mut(),
            &a_plus,
            modulator,
            &self.learning,
            k,
            &mut self.round_rng,
        );
        let t2 = self.timing.map(|_| Instant::now());

        self.game.step_environment(&self.env, j, &mut self.env_rng);
        if let (Some(t), Some(t0), Some(t1), Some(t2)) = (self.timing.as_mut(), t0, t1, t2) {
            let t3 = Instant::now();
            t.emulation += t1 - t0;
            t.plasticity += t2 - t1;
            t.environment += t3 - t2;
        }

        self.iteration += 1;
        let checksum = (self.checksum_every > 0 && self.iteration % self.checksum_every == 0)
            .then(|| self.network.weights().checksum());
        Ok(IterationLog {
            iteration: self.iteration,
            k,
            j,
            rho,
            reward,
            r_bar_k: self.rewards.r_bar(k).unwrap_or(0.0),
            mean_expected_reward: self.rewards.mean_expected_reward(),
            performance: self.rewards.performance(),
            checksum,
        })
    }

    /// Run `n` iterations, handing each log to `sink`.
    pub fn run(&mut self, n: u64, mut sink: impl FnMut(&IterationLog)) -> Result<()> {
        for _ in 0..n {
            let log = self.run_iteration()?;
            sink(&log);
        }
        Ok(())
    }

    /// Reward measurement with learning off: every state is presented
    /// `rounds` times to a copy of the network, starting from a fresh reward
    /// memory. Returns (mean expected reward, performance). The experiment
    /// itself is not advanced.
    pub fn evaluate(&self, rounds: usize) -> Result<(f64, f64)> {
        let mut net = self.network.clone();
        let mut ties = self.tie_rng.clone();
        let mut rewards = RewardState::new();
        for _ in 0..rounds {
            for k in 0..N_STATES {
                let rho = net.emulate_window(k, &self.train, self.t_emu)?;
                net.read_and_reset_correlations();
                let j = select_action(&rho, &mut ties);
                rewards.update_expected_reward(k, compute_reward(j, k), self.learning.gamma);
            }
        }
        Ok((rewards.mean_expected_reward(), rewards.performance()))
    }
}

/// Final state of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: u64,
    pub mean_expected_reward: f64,
    pub performance: f64,
    pub misses: u64,
    pub runtime_s: f64,
    pub weights_checksum: String,
    #[serde(skip)]
    pub weights: Option<WeightMatrix>,
}

/// Run the configured experiment, passing every iteration to `sink`.
pub fn run_experiment(cfg: &ExperimentConfig, sink: impl FnMut(&IterationLog)) -> Result<RunSummary> {
    let start = Instant::now();
    let mut exp = Experiment::new(cfg)?;
    exp.run(cfg.iterations, sink)?;
    Ok(summarize(&exp, start.elapsed()))
}

pub fn summarize(exp: &Experiment, runtime: Duration) -> RunSummary {
    RunSummary {
        iterations: exp.iteration(),
        mean_expected_reward: exp.mean_expected_reward(),
        performance: exp.performance(),
        misses: exp.game.resets,
        runtime_s: runtime.as_secs_f64(),
        weights_checksum: exp.weights().checksum(),
        weights: Some(exp.weights().clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ProfileName;
    use rand::SeedableRng;

    fn quick_cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.iterations = 50;
        c
    }

    #[test]
    fn single_winner() {
        let mut rho = [0u8; 32];
        rho[3] = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&rho, &mut rng), 3);
    }

    #[test]
    fn two_way_tie_is_fair() {
        let mut rho = [3u8; 32];
        rho[0] = 5;
        rho[1] = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeros = (0..10_000).filter(|_| select_action(&rho, &mut rng) == 0).count();
        assert!((4800..=5200).contains(&zeros), "{zeros}");
    }

    #[test]
    fn full_tie_is_uniform() {
        let rho = [0u8; 32];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hist = [0usize; 32];
        for _ in 0..32_000 {
            hist[select_action(&rho, &mut rng)] += 1;
        }
        assert!(hist.iter().all(|&h| (800..1200).contains(&h)), "{hist:?}");
    }

    #[test]
    fn learning_off_keeps_weights() {
        let mut c = quick_cfg();
        c.beta = 0.0;
        let mut exp = Experiment::new(&c).unwrap();
        let before = exp.weights().clone();
        exp.run(50, |_| {}).unwrap();
        assert_eq!(exp.weights(), &before);
    }

    #[test]
    fn first_visit_changes_nothing() {
        let mut exp = Experiment::new(&quick_cfg()).unwrap();
        let before = exp.weights().clone();
        let log = exp.run_iteration().unwrap();
        assert_eq!(exp.weights(), &before);
        assert_eq!(log.r_bar_k, log.reward);
    }

    #[test]
    fn deterministic_without_noise() {
        let mut c = quick_cfg();
        c.set_profile(ProfileName::Ideal);
        c.sigma_i = Some(0.0);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_experiment(&c, |l| a.push(l.clone())).unwrap();
        run_experiment(&c, |l| b.push(l.clone())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
    }

    #[test]
    fn zero_iterations() {
        let mut c = quick_cfg();
        c.iterations = 0;
        let s = run_experiment(&c, |_| {}).unwrap();
        assert_eq!((s.iterations, s.mean_expected_reward, s.performance), (0, 0.0, 0.0));
        assert_eq!(s.weights.unwrap(), initial_weights(&c));
    }

    #[test]
    fn baseline_moves_only_in_visited_state() {
        let mut exp = Experiment::new(&quick_cfg()).unwrap();
        for _ in 0..30 {
            let before = exp.rewards.clone();
            let log = exp.run_iteration().unwrap();
            for s in (0..N_STATES).filter(|&s| s != log.k) {
                assert_eq!(before.r_bar(s), exp.rewards.r_bar(s));
            }
        }
    }

    #[test]
    fn correlations_consumed_by_update() {
        let mut exp = Experiment::new(&quick_cfg()).unwrap();
        for _ in 0..5 {
            exp.run_iteration().unwrap();
            assert!(exp.network.peek_correlations().is_zero());
        }
    }

    #[test]
    fn evaluation_leaves_experiment_untouched() {
        let mut exp = Experiment::new(&quick_cfg()).unwrap();
        exp.run(20, |_| {}).unwrap();
        let mut twin = exp.clone();
        let (r, p) = exp.evaluate(2).unwrap();
        assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&p));
        assert_eq!(exp.run_iteration().unwrap(), twin.run_iteration().unwrap());
    }
}
