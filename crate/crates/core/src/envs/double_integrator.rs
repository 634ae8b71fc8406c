use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, StateVec};

/// Parameters of the double integrator `ṡ = [x₂, a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorSpec {
    /// Control limit, `|a| <= a_max`.
    pub a_max: f64,
    /// Constraint box half-width, `‖s‖∞ <= bound`.
    pub bound: f64,
    pub dt: f64,
    pub max_episode_len: usize,
    pub state_weight: f64,
    pub action_weight: f64,
}

impl Default for DoubleIntegratorSpec {
    fn default() -> Self {
        Self {
            a_max: 0.5,
            bound: 5.0,
            dt: 0.1,
            max_episode_len: 200,
            state_weight: 1.0,
            action_weight: 1.0,
        }
    }
}

/// `‖s‖∞ − bound`.
pub fn di_constraint(s: &[f64], bound: f64) -> f64 {
    s.iter().fold(0.0_f64, |m, v| m.max(v.abs())) - bound
}

/// Negated quadratic regulation cost `−(‖s‖² + a²)`.
pub fn di_reward(s: &[f64], a: &[f64]) -> f64 {
    let ss: f64 = s.iter().map(|v| v * v).sum();
    let aa: f64 = a.iter().map(|v| v * v).sum();
    -(ss + aa)
}

#[derive(Clone, Debug)]
pub struct DoubleIntegrator {
    params: DoubleIntegratorSpec,
    spec: EnvSpec,
}

impl DoubleIntegrator {
    pub fn new(params: DoubleIntegratorSpec) -> Self {
        let spec = EnvSpec {
            name: "double-integrator".into(),
            state_dim: 2,
            action_dim: 1,
            action_low: vec![-params.a_max],
            action_high: vec![params.a_max],
            dt: params.dt,
            max_episode_len: params.max_episode_len,
            termination: format!(
                "step count reaches {} or ‖s‖∞ exceeds {}",
                params.max_episode_len, params.bound
            ),
            exit_violation: params.bound,
            obs_scale: vec![1.0 / params.bound; 2],
            probe_low: vec![-params.bound; 2],
            probe_high: vec![params.bound; 2],
        };
        Self { params, spec }
    }

    pub fn params(&self) -> &DoubleIntegratorSpec {
        &self.params
    }
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        Self::new(DoubleIntegratorSpec::default())
    }
}

impl Environment for DoubleIntegrator {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> StateVec {
        let b = self.params.bound;
        StateVec(vec![rng.random_range(-b..=b), rng.random_range(-b..=b)])
    }

    fn constraint(&self, s: &[f64]) -> f64 {
        di_constraint(s, self.params.bound)
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let aa: f64 = a.iter().map(|v| v * v).sum();
        -(self.params.state_weight * ss + self.params.action_weight * aa)
    }

    fn dynamics(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let dt = self.params.dt;
        vec![s[0] + dt * s[1], s[1] + dt * a[0]]
    }

    fn in_region(&self, s: &[f64]) -> bool {
        self.constraint(s) <= 0.0
    }
}

/// Double-integrator dynamics with a constant constraint value and no
/// bounding region. Used to exercise the oracle on a trivially feasible (or
/// trivially infeasible) system.
#[derive(Clone, Debug)]
pub struct ConstantConstraint {
    inner: DoubleIntegrator,
    value: f64,
    spec: EnvSpec,
}

impl ConstantConstraint {
    pub fn new(value: f64) -> Self {
        let inner = DoubleIntegrator::default();
        let mut spec = inner.spec.clone();
        spec.name = "constant-h".into();
        spec.termination = format!("step count reaches {}", spec.max_episode_len);
        Self { inner, value, spec }
    }
}

impl Environment for ConstantConstraint {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> StateVec {
        self.inner.reset(rng)
    }

    fn constraint(&self, _s: &[f64]) -> f64 {
        self.value
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        self.inner.reward(s, a)
    }

    fn dynamics(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        self.inner.dynamics(s, a)
    }

    fn in_region(&self, _s: &[f64]) -> bool {
        true
    }
}
