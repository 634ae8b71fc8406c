use ndarray::{Array2, ArrayView2};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::approx::{Mlp, OutputHead};
use crate::constraints::{ConstraintKind, MultiplierShape};
use crate::env::{EnvSpec, Transition};
use crate::error::{ApproxError, Result};

/// Maps raw states and actions to network inputs: states are scaled per
/// coordinate and actions are mapped from their bounds onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub obs_scale: Vec<f64>,
    pub act_center: Vec<f64>,
    pub act_half: Vec<f64>,
}

impl Normalizer {
    pub fn from_spec(spec: &EnvSpec) -> Self {
        let act_center = spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| 0.5 * (l + h)).collect();
        let act_half = spec.action_low.iter().zip(&spec.action_high).map(|(l, h)| 0.5 * (h - l)).collect();
        Self { obs_scale: spec.obs_scale.clone(), act_center, act_half }
    }

    pub fn state_dim(&self) -> usize {
        self.obs_scale.len()
    }

    pub fn action_dim(&self) -> usize {
        self.act_half.len()
    }

    pub fn states<'a>(&self, rows: impl ExactSizeIterator<Item = &'a [f64]>) -> Array2<f64> {
        let n = rows.len();
        let d = self.state_dim();
        let mut out = Array2::zeros((n, d));
        for (i, s) in rows.enumerate() {
            for j in 0..d {
                out[[i, j]] = s[j] * self.obs_scale[j];
            }
        }
        out
    }

    /// `[s̃, ã]` rows from normalized states and raw actions.
    pub fn critic_input(&self, s_n: ArrayView2<'_, f64>, a: ArrayView2<'_, f64>) -> Array2<f64> {
        let (n, ds, da) = (s_n.nrows(), self.state_dim(), self.action_dim());
        let mut x = Array2::zeros((n, ds + da));
        for i in 0..n {
            for j in 0..ds {
                x[[i, j]] = s_n[[i, j]];
            }
            for j in 0..da {
                x[[i, ds + j]] = (a[[i, j]] - self.act_center[j]) / self.act_half[j];
            }
        }
        x
    }

    /// Converts input-gradient rows of a critic into `∇_a` rows.
    pub fn action_grad(&self, dx: &Array2<f64>) -> Array2<f64> {
        let (ds, da) = (self.state_dim(), self.action_dim());
        Array2::from_shape_fn((dx.nrows(), da), |(i, j)| dx[[i, ds + j]] / self.act_half[j])
    }
}

/// The four trained networks plus the two targets.
///
/// `safety` is the safety critic `Q_h` under the reachability constraint,
/// the cost critic `Q_c` under the cumulative-cost constraint, and the
/// regression `F(s, a)` of the sampled constraint value under CBF or SI.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub critic: Mlp,
    pub critic_target: Mlp,
    pub safety: Mlp,
    pub safety_target: Mlp,
    pub actor: Mlp,
    /// `λ(s)` for a statewise multiplier; for a scalar multiplier a `1 → 1`
    /// network fed a constant zero, so `λ = softplus(bias)`.
    pub multiplier: Option<Mlp>,
    pub shape: MultiplierShape,
    pub lambda_max: f64,
    /// Factor on the normalized state before it enters the statewise
    /// multiplier.
    pub multiplier_gain: f64,
    pub norm: Normalizer,
}

pub const NET_NAMES: [&str; 6] = ["critic", "critic_target", "safety", "safety_target", "actor", "multiplier"];

impl Networks {
    pub fn init(spec: &EnvSpec, kind: &ConstraintKind, hidden: &[usize], lambda_max: f64, rng: &mut dyn RngCore) -> Result<Self> {
        Self::init_with(spec, kind, hidden, hidden, lambda_max, rng)
    }

    /// Like [`Networks::init`], with separate hidden widths for the
    /// statewise multiplier.
    pub fn init_with(
        spec: &EnvSpec,
        kind: &ConstraintKind,
        hidden: &[usize],
        multiplier_hidden: &[usize],
        lambda_max: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let norm = Normalizer::from_spec(spec);
        let (ds, da) = (spec.state_dim, spec.action_dim);
        let layers = |input: usize, hidden: &[usize], out: usize| {
            let mut v = vec![input];
            v.extend_from_slice(hidden);
            v.push(out);
            v
        };
        let sizes = |input: usize, out: usize| layers(input, hidden, out);
        let critic = Mlp::init(&sizes(ds + da, 1), OutputHead::Identity, 1.0, rng)?;
        let safety = Mlp::init(&sizes(ds + da, 1), OutputHead::Identity, 1.0, rng)?;
        let head = OutputHead::TanhScaled { low: spec.action_low.clone(), high: spec.action_high.clone() };
        let actor = Mlp::init(&sizes(ds, da), head, 0.1, rng)?;
        let shape = kind.multiplier_shape();
        let multiplier = match shape {
            MultiplierShape::Statewise => Some(Mlp::init(&layers(ds, multiplier_hidden, 1), OutputHead::Softplus, 0.1, rng)?),
            MultiplierShape::Scalar => Some(Mlp::zeros(&[1, 1], OutputHead::Softplus)?),
            MultiplierShape::None => None,
        };
        Ok(Self {
            critic_target: critic.clone(),
            critic,
            safety_target: safety.clone(),
            safety,
            actor,
            multiplier,
            shape,
            lambda_max,
            multiplier_gain: 1.0,
            norm,
        })
    }

    /// Shifts the multiplier output bias so that `λ ≈ value` at
    /// initialization (exact for the scalar multiplier).
    pub fn set_initial_lambda(&mut self, value: f64) -> Result<()> {
        if let Some(m) = &mut self.multiplier {
            let pre = value + (-(-value).exp_m1()).ln();
            m.set_output_bias(&[pre])?;
        }
        Ok(())
    }

    pub fn named(&self) -> Vec<(&'static str, &Mlp)> {
        let mut v = vec![
            (NET_NAMES[0], &self.critic),
            (NET_NAMES[1], &self.critic_target),
            (NET_NAMES[2], &self.safety),
            (NET_NAMES[3], &self.safety_target),
            (NET_NAMES[4], &self.actor),
        ];
        if let Some(m) = &self.multiplier {
            v.push((NET_NAMES[5], m));
        }
        v
    }

    /// Multiplier input rows for normalized states.
    pub fn multiplier_input(&self, s_n: &Array2<f64>) -> Array2<f64> {
        match self.shape {
            MultiplierShape::Scalar => Array2::zeros((s_n.nrows(), 1)),
            _ => s_n * self.multiplier_gain,
        }
    }

    /// `λ(s)` per normalized state row, clamped at `lambda_max`.
    pub fn lambdas(&self, s_n: &Array2<f64>) -> Result<Vec<f64>> {
        let Some(m) = &self.multiplier else {
            return Ok(vec![0.0; s_n.nrows()]);
        };
        let tape = m.forward_batch(self.multiplier_input(s_n).view())?;
        Ok(tape.output().column(0).iter().map(|l| l.min(self.lambda_max)).collect())
    }

    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>, ApproxError> {
        let s_n: Vec<f64> = s.iter().zip(&self.norm.obs_scale).map(|(v, k)| v * k).collect();
        self.actor.forward(&s_n)
    }

    /// `F(s, π(s))` for each state row (raw states).
    pub fn constraint_at_policy(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let s_n = self.norm.states(states.iter().map(|s| s.as_slice()));
        let a = self.actor.forward_batch(s_n.view())?.output().clone();
        let x = self.norm.critic_input(s_n.view(), a.view());
        Ok(self.safety.forward_batch(x.view())?.output().column(0).to_vec())
    }
}

/// A sampled minibatch in network coordinates.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub s_next: Array2<f64>,
    /// Reward after scaling (and shaping, for reward shaping).
    pub r: Vec<f64>,
    pub h: Vec<f64>,
    pub h_next: Vec<f64>,
    pub c: Vec<f64>,
    /// The transition left the bounding region; targets treat the exit as
    /// absorbing.
    pub exit: Vec<bool>,
    /// Sampled constraint value, used as the regression target of `F`.
    pub sampled_constraint: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn from_transitions(
        ts: &[&Transition],
        norm: &Normalizer,
        reward: impl Fn(&Transition) -> f64,
        sampled_constraint: impl Fn(&Transition) -> f64,
    ) -> Self {
        let da = norm.action_dim();
        let mut a = Array2::zeros((ts.len(), da));
        for (i, t) in ts.iter().enumerate() {
            for j in 0..da {
                a[[i, j]] = t.a.0[j];
            }
        }
        Self {
            s: norm.states(ts.iter().map(|t| t.s.as_slice())),
            a,
            s_next: norm.states(ts.iter().map(|t| t.s_next.as_slice())),
            r: ts.iter().map(|t| reward(t)).collect(),
            h: ts.iter().map(|t| t.h).collect(),
            h_next: ts.iter().map(|t| t.h_next).collect(),
            c: ts.iter().map(|t| f64::from(t.c)).collect(),
            exit: ts.iter().map(|t| t.done == crate::env::Done::Exit).collect(),
            sampled_constraint: ts.iter().map(|t| sampled_constraint(t)).collect(),
        }
    }
}
