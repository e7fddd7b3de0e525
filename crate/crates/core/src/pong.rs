//! Single-paddle Pong on a unit square with three reflective walls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Field side length.
    pub field: f64,
    /// L1 norm of the ball velocity per iteration.
    pub ball_speed: f64,
    /// Paddle speed per iteration.
    pub paddle_speed: f64,
    pub ball_radius: f64,
    pub paddle_length: f64,
    pub n_cols: usize,
}

/// Half-width of the reward window in columns.
pub const REWARD_WINDOW: usize = 3;
const REWARDS: [f64; REWARD_WINDOW + 1] = [1.0, 0.7, 0.4, 0.1];

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            field: 1.0,
            ball_speed: 0.025,
            paddle_speed: 0.05,
            ball_radius: 0.02,
            paddle_length: 0.20,
            n_cols: 32,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("L", self.field),
            ("v_ball", self.ball_speed),
            ("v_p", self.paddle_speed),
            ("r_b", self.ball_radius),
            ("r_p", self.paddle_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be finite and > 0"));
            }
        }
        if self.n_cols != 32 {
            return Err(Error::config("n_cols", "the network has exactly 32 input units"));
        }
        if self.paddle_length >= self.field {
            return Err(Error::config("r_p", "paddle must be shorter than the field"));
        }
        if self.ball_speed >= self.field {
            return Err(Error::config("v_ball", "ball speed must be below the field length"));
        }
        // A rewarded aim must also be a catch.
        let window = REWARD_WINDOW as f64 * self.field / self.n_cols as f64;
        if window > self.catch_half_width() {
            return Err(Error::config(
                "r_p",
                format!(
                    "reward window half-width {window:.4} exceeds catch half-width {:.4}",
                    self.catch_half_width()
                ),
            ));
        }
        Ok(())
    }

    pub fn catch_half_width(&self) -> f64 {
        self.paddle_length / 2.0 + self.ball_radius
    }

    pub fn column_center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.field / self.n_cols as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub ball: (f64, f64),
    pub vel: (f64, f64),
    pub paddle_x: f64,
    /// Number of misses so far.
    pub resets: u64,
}

/// Graded reward for aiming at column `j` while the ball is in column `k`.
pub fn compute_reward(j: usize, k: usize) -> f64 {
    REWARDS.get(j.abs_diff(k)).copied().unwrap_or(0.0)
}

impl GameState {
    /// Ball in the middle, paddle centered, random direction.
    pub fn new<R: Rng + ?Sized>(env: &EnvParams, rng: &mut R) -> Self {
        let mut s = GameState {
            ball: (0.0, 0.0),
            vel: (0.0, 0.0),
            paddle_x: env.field / 2.0,
            resets: 0,
        };
        s.reset_ball(env, rng);
        s
    }

    /// Put the ball back in the middle with a fresh direction. The vertical
    /// share of the L1 speed is uniform in [0.25, 0.75]; both signs are fair
    /// coin flips.
    pub fn reset_ball<R: Rng + ?Sized>(&mut self, env: &EnvParams, rng: &mut R) {
        let f: f64 = rng.random_range(0.25..=0.75);
        // Compute the larger share by product and the smaller by exact
        // subtraction so that |vx| + |vy| == speed in floating point.
        let big = f.max(1.0 - f) * env.ball_speed;
        let small = env.ball_speed - big;
        let (ax, ay) = if f >= 0.5 { (small, big) } else { (big, small) };
        let sx = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let sy = if rng.random::<bool>() { 1.0 } else { -1.0 };
        self.ball = (env.field / 2.0, env.field / 2.0);
        self.vel = (sx * ax, sy * ay);
    }

    pub fn ball_column(&self, env: &EnvParams) -> usize {
        let k = (self.ball.0 / env.field * env.n_cols as f64).floor();
        k.clamp(0.0, (env.n_cols - 1) as f64) as usize
    }

    /// Move the paddle toward column `j`, advance the ball, reflect at walls,
    /// and catch or miss at the baseline. Returns `true` on a miss.
    pub fn step_environment<R: Rng + ?Sized>(&mut self, env: &EnvParams, j: usize, rng: &mut R) -> bool {
        let target = env.column_center(j);
        let gap = target - self.paddle_x;
        let half = env.paddle_length / 2.0;
        self.paddle_x += gap.signum() * gap.abs().min(env.paddle_speed);
        self.paddle_x = self.paddle_x.clamp(half, env.field - half);

        let (mut x, mut y) = (self.ball.0 + self.vel.0, self.ball.1 + self.vel.1);
        if x < 0.0 {
            x = -x;
            self.vel.0 = -self.vel.0;
        } else if x > env.field {
            x = 2.0 * env.field - x;
            self.vel.0 = -self.vel.0;
        }
        if y > env.field {
            y = 2.0 * env.field - y;
            self.vel.1 = -self.vel.1;
        }
        self.ball = (x, y);
        if y < 0.0 {
            if (x - self.paddle_x).abs() <= env.catch_half_width() {
                self.ball.1 = -y;
                self.vel.1 = -self.vel.1;
            } else {
                self.resets += 1;
                self.reset_ball(env, rng);
                return true;
            }
        }
        false
    }
}
