use serde::{Deserialize, Serialize};

use crate::approx::LinearSchedule;
use crate::error::{Error, Result};

/// Learning-rate endpoints `[start, end]`, annealed linearly over training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRange(pub f64, pub f64);

impl LrRange {
    pub fn schedule(self, updates: u64) -> LinearSchedule {
        LinearSchedule { start: self.0, end: self.1, steps: updates.max(1) }
    }

    /// Learning rate at training fraction `f ∈ [0, 1]`.
    pub fn at_fraction(self, f: f64) -> f64 {
        self.0 + (self.1 - self.0) * f
    }
}

/// Additive Gaussian action noise, standard deviation annealed linearly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationSpec {
    pub std_start: f64,
    pub std_end: f64,
}

impl Default for ExplorationSpec {
    fn default() -> Self {
        Self { std_start: 0.1, std_end: 0.01 }
    }
}

impl ExplorationSpec {
    pub fn std_at(&self, k: u64, total: u64) -> f64 {
        if total == 0 {
            return self.std_end;
        }
        let f = (k as f64 / total as f64).min(1.0);
        self.std_start + (self.std_end - self.std_start) * f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    /// Hidden widths of the statewise multiplier; `hidden` when absent.
    pub multiplier_hidden: Option<Vec<usize>>,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps collected before the first update.
    pub warmup_steps: u64,
    pub gamma: f64,
    pub tau: f64,
    /// Actor update interval `m_π`, counted in critic updates.
    pub actor_interval: u64,
    /// Multiplier update interval `m_λ`.
    pub multiplier_interval: u64,
    pub lambda_max: f64,
    /// Factor on the normalized state fed to the statewise multiplier.
    pub multiplier_input_gain: f64,
    /// Multiplier value at initialization, set through the output bias.
    pub lambda_init: f64,
    pub lr_critic: LrRange,
    pub lr_actor: LrRange,
    pub lr_multiplier: LrRange,
    pub clip_norm: f64,
    /// Rewards are multiplied by this before they reach the critic.
    pub reward_scale: f64,
    pub exploration: ExplorationSpec,
    /// Collect transitions on a separate thread.
    pub rollout_thread: bool,
    /// Probe states per feasibility class for the multiplier diagnostics.
    pub probe_count: usize,
    /// Evaluation episodes when the environment has no fixed start list.
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            multiplier_hidden: None,
            batch_size: 512,
            buffer_capacity: 50_000,
            warmup_steps: 1_000,
            gamma: 0.99,
            tau: 0.005,
            actor_interval: 4,
            multiplier_interval: 12,
            lambda_max: 100.0,
            lambda_init: std::f64::consts::LN_2,
            multiplier_input_gain: 1.0,
            lr_critic: LrRange(1e-4, 1e-6),
            lr_actor: LrRange(2e-5, 1e-6),
            lr_multiplier: LrRange(6e-7, 1e-7),
            clip_norm: 10.0,
            reward_scale: 1.0,
            exploration: ExplorationSpec::default(),
            rollout_thread: false,
            probe_count: 1_000,
            eval_episodes: 100,
        }
    }
}

fn bad(field: &str, msg: &str) -> Error {
    Error::Config(format!("train.{field}: {msg}"))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(bad("hidden", "needs at least one positive width"));
        }
        if let Some(m) = &self.multiplier_hidden {
            if m.is_empty() || m.contains(&0) {
                return Err(bad("multiplier_hidden", "needs at least one positive width"));
            }
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(bad("buffer_capacity", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma", "must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(bad("tau", "must lie in (0, 1]"));
        }
        if self.actor_interval == 0 {
            return Err(bad("actor_interval", "must be >= 1"));
        }
        if self.multiplier_interval == 0 {
            return Err(bad("multiplier_interval", "must be >= 1"));
        }
        if !(self.multiplier_input_gain > 0.0 && self.multiplier_input_gain.is_finite()) {
            return Err(bad("multiplier_input_gain", "must be positive"));
        }
        if !(self.lambda_init > 0.0 && self.lambda_init < self.lambda_max) {
            return Err(bad("lambda_init", "must lie in (0, lambda_max)"));
        }
        if !(self.lambda_max > 0.0) {
            return Err(bad("lambda_max", "must be positive"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(bad("clip_norm", "must be positive"));
        }
        if !(self.reward_scale > 0.0) || !self.reward_scale.is_finite() {
            return Err(bad("reward_scale", "must be positive"));
        }
        let e = &self.exploration;
        if !(e.std_start >= 0.0 && e.std_end >= 0.0) {
            return Err(bad("exploration", "std must be >= 0"));
        }
        if self.probe_count == 0 || self.eval_episodes == 0 {
            return Err(bad("probe_count", "probe and evaluation counts must be positive"));
        }
        for (name, r) in [("lr_critic", self.lr_critic), ("lr_actor", self.lr_actor), ("lr_multiplier", self.lr_multiplier)] {
            if !(r.0 > 0.0 && r.1 > 0.0) || !r.0.is_finite() || !r.1.is_finite() {
                return Err(bad(name, "learning rates must be positive"));
            }
        }
        self.check_lr_ordering()
    }

    /// Critic, actor and multiplier rates are interpolated at the same
    /// training fraction. Linear interpolation keeps a strict ordering on
    /// every `k < K` iff it is strict at the start and non-strict at the end.
    pub fn check_lr_ordering(&self) -> Result<()> {
        let (c, a, m) = (self.lr_critic, self.lr_actor, self.lr_multiplier);
        if !(c.0 > a.0 && a.0 > m.0) {
            return Err(bad("lr_critic", "initial rates must satisfy critic > actor > multiplier"));
        }
        if !(c.1 >= a.1 && a.1 >= m.1) {
            return Err(bad("lr_critic", "final rates must satisfy critic >= actor >= multiplier"));
        }
        Ok(())
    }

    /// `(critic, actor, multiplier)` rates at environment step `k` of `total`.
    pub fn rates_at(&self, k: u64, total: u64) -> (f64, f64, f64) {
        let f = if total == 0 { 0.0 } else { (k as f64 / total as f64).min(1.0) };
        (self.lr_critic.at_fraction(f), self.lr_actor.at_fraction(f), self.lr_multiplier.at_fraction(f))
    }
}
