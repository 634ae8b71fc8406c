//! Environment abstraction and the record types shared by the oracle, the
//! trainer and the command line.
//!
//! Environments are immutable descriptions. Stepping is a pure function of
//! `(state, action)`, so one environment value can be shared across threads.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::EnvError;

/// A point in an environment's state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec(pub Vec<f64>);

/// A control input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionVec(pub Vec<f64>);

impl StateVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl ActionVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<f64>> for StateVec {
    fn from(v: Vec<f64>) -> Self {
        StateVec(v)
    }
}

impl From<Vec<f64>> for ActionVec {
    fn from(v: Vec<f64>) -> Self {
        ActionVec(v)
    }
}

/// Why an episode stopped after a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Done {
    /// The episode continues.
    No,
    /// Step budget exhausted. Value targets bootstrap normally.
    Timeout,
    /// The state left the bounding region. Safety targets use the exit
    /// violation instead of a bootstrapped value.
    Exit,
}

impl Done {
    pub fn is_done(self) -> bool {
        self != Done::No
    }
}

/// One environment step as stored in the replay buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: StateVec,
    pub a: ActionVec,
    pub r: f64,
    pub s_next: StateVec,
    /// Constraint value `h(s)`.
    pub h: f64,
    /// Constraint value `h(s')`.
    pub h_next: f64,
    /// Cost indicator: 1 exactly when `h > 0`.
    pub c: u8,
    pub done: Done,
}

/// Cost indicator of a constraint value.
pub fn cost_of(h: f64) -> u8 {
    u8::from(h > 0.0)
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Integration step in seconds.
    pub dt: f64,
    pub max_episode_len: usize,
    /// Human-readable termination rule.
    pub termination: String,
    /// Constraint violation assigned to states that leave the bounding
    /// region (the bound `h_max` on single-step violations). The safety value
    /// of an exit is `max(h(s'), exit_violation)`.
    pub exit_violation: f64,
    /// Per-coordinate multipliers applied to states before they enter a network.
    pub obs_scale: Vec<f64>,
    /// Box over the leading state coordinates used for probe states; the
    /// rest is filled in by [`Environment::complete_state`].
    pub probe_low: Vec<f64>,
    pub probe_high: Vec<f64>,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(EnvError::InvalidSpec("action bound length != action_dim".into()));
        }
        if self
            .action_low
            .iter()
            .zip(&self.action_high)
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(EnvError::InvalidSpec("action_low must be < action_high".into()));
        }
        if !(self.dt > 0.0) {
            return Err(EnvError::InvalidSpec("dt must be positive".into()));
        }
        if self.obs_scale.len() != self.state_dim {
            return Err(EnvError::InvalidSpec("obs_scale length != state_dim".into()));
        }
        if self.probe_low.len() != self.probe_high.len() || self.probe_low.len() > self.state_dim {
            return Err(EnvError::InvalidSpec("probe box does not match the state".into()));
        }
        if self.max_episode_len == 0 {
            return Err(EnvError::InvalidSpec("max_episode_len must be positive".into()));
        }
        Ok(())
    }

    /// Clamp an action into the declared bounds.
    pub fn clamp_action(&self, a: &[f64]) -> ActionVec {
        ActionVec(
            a.iter()
                .zip(self.action_low.iter().zip(&self.action_high))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect(),
        )
    }

    /// Safety value of a state that exited the bounding region.
    pub fn exit_value(&self, h_next: f64) -> f64 {
        h_next.max(self.exit_violation)
    }
}

/// A deterministic control system with a state constraint `h(s) <= 0`.
pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Sample an initial state from the environment's `d_0`.
    fn reset(&self, rng: &mut dyn RngCore) -> StateVec;

    /// Constraint function; `h(s) <= 0` means the state is safe.
    fn constraint(&self, s: &[f64]) -> f64;

    fn reward(&self, s: &[f64], a: &[f64]) -> f64;

    /// Integrate one step. `a` is already clamped.
    fn dynamics(&self, s: &[f64], a: &[f64]) -> Vec<f64>;

    /// Whether `s` is inside the bounding region in which episodes run.
    fn in_region(&self, s: &[f64]) -> bool;

    /// Fill derived coordinates of a partially specified state (for example
    /// the reference waypoint of a tracking task). Identity by default.
    fn complete_state(&self, s: &[f64]) -> StateVec {
        StateVec(s.to_vec())
    }

    /// Fixed evaluation starts, when the environment's protocol has them.
    fn evaluation_starts(&self) -> Option<Vec<StateVec>> {
        None
    }

    /// One environment step. Actions outside the bounds are clamped.
    fn step(&self, s: &StateVec, a: &ActionVec) -> Result<Transition, EnvError> {
        let spec = self.spec();
        if s.len() != spec.state_dim {
            return Err(EnvError::StateDim { expected: spec.state_dim, got: s.len() });
        }
        if a.len() != spec.action_dim {
            return Err(EnvError::ActionDim { expected: spec.action_dim, got: a.len() });
        }
        if !s.is_finite() {
            return Err(EnvError::NonFiniteState);
        }
        let a = spec.clamp_action(a.as_slice());
        let next = self.dynamics(s.as_slice(), a.as_slice());
        if next.iter().any(|v| !v.is_finite()) {
            return Err(EnvError::IntegrationOverflow);
        }
        let h = self.constraint(s.as_slice());
        let h_next = self.constraint(&next);
        let r = self.reward(s.as_slice(), a.as_slice());
        let done = if self.in_region(&next) { Done::No } else { Done::Exit };
        Ok(Transition {
            s: s.clone(),
            a,
            r,
            s_next: StateVec(next),
            h,
            h_next,
            c: cost_of(h),
            done,
        })
    }
}
