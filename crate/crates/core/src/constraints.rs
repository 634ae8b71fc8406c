//! Constraint functionals for the policy and multiplier losses.

use serde::{Deserialize, Serialize};

use crate::error::ConstraintError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintKind {
    /// `Q_h(s, π(s)) ≤ 0`.
    Reachability,
    /// `Q_c(s, π(s)) − threshold ≤ 0` with a scalar multiplier.
    CumulativeCost { threshold: f64 },
    /// `ḣ + μh ≤ 0`.
    Cbf { mu: f64 },
    /// `φ(s′) − max{φ(s) − η_D, 0} ≤ 0` with `φ = σ − (−h)ⁿ + kḣ`.
    SafetyIndex { sigma: f64, n: f64, k: f64, eta_d: f64 },
    /// No constraint; the reward becomes `r − ρh`.
    RewardShaping { rho: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MultiplierShape {
    Statewise,
    Scalar,
    None,
}

impl ConstraintKind {
    pub fn cbf_default() -> Self {
        ConstraintKind::Cbf { mu: 0.1 }
    }

    pub fn safety_index_default() -> Self {
        ConstraintKind::SafetyIndex { sigma: 0.1, n: 2.0, k: 1.0, eta_d: 0.1 }
    }

    pub fn reward_shaping_default() -> Self {
        ConstraintKind::RewardShaping { rho: 0.5 }
    }

    pub fn cumulative_cost_default() -> Self {
        ConstraintKind::CumulativeCost { threshold: 0.1 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintKind::Reachability => "reachability",
            ConstraintKind::CumulativeCost { .. } => "cumulative-cost",
            ConstraintKind::Cbf { .. } => "cbf",
            ConstraintKind::SafetyIndex { .. } => "safety-index",
            ConstraintKind::RewardShaping { .. } => "reward-shaping",
        }
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        let bad = |m: &str| Err(ConstraintError::InvalidParams(m.into()));
        match *self {
            ConstraintKind::Reachability => Ok(()),
            ConstraintKind::CumulativeCost { threshold } if !(threshold >= 0.0) => bad("threshold must be >= 0"),
            ConstraintKind::Cbf { mu } if !(mu > 0.0 && mu < 1.0) => bad("mu must lie in (0, 1)"),
            ConstraintKind::SafetyIndex { n, .. } if !(n >= 1.0) => bad("n must be >= 1"),
            ConstraintKind::SafetyIndex { k, .. } if !(k > 0.0) => bad("k must be > 0"),
            ConstraintKind::SafetyIndex { eta_d, .. } if !(eta_d >= 0.0) => bad("eta_d must be >= 0"),
            ConstraintKind::SafetyIndex { sigma, .. } if !sigma.is_finite() => bad("sigma must be finite"),
            ConstraintKind::RewardShaping { rho } if !(rho > 0.0) => bad("rho must be > 0"),
            _ => Ok(()),
        }
    }

    pub fn multiplier_shape(&self) -> MultiplierShape {
        match self {
            ConstraintKind::Reachability | ConstraintKind::Cbf { .. } | ConstraintKind::SafetyIndex { .. } => {
                MultiplierShape::Statewise
            }
            ConstraintKind::CumulativeCost { .. } => MultiplierShape::Scalar,
            ConstraintKind::RewardShaping { .. } => MultiplierShape::None,
        }
    }

    /// True when the constraint value is computed from `h` alone and a
    /// network only regresses it.
    pub fn is_energy_function(&self) -> bool {
        matches!(self, ConstraintKind::Cbf { .. } | ConstraintKind::SafetyIndex { .. })
    }
}

/// The parts of a transition the constraint functionals read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstraintSample {
    pub h: f64,
    pub h_next: f64,
    pub dt: f64,
}

impl ConstraintSample {
    pub fn h_dot(&self) -> f64 {
        (self.h_next - self.h) / self.dt
    }
}

/// Learned critics evaluated at `(s, π(s))`.
pub trait ConstraintCritics {
    /// `Q_h(s, π(s))`.
    fn safety_value(&self) -> f64;
    /// `Q_c(s, π(s))`.
    fn cost_value(&self) -> f64;
}

/// Critic values that are already known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticValues {
    pub safety: f64,
    pub cost: f64,
}

impl ConstraintCritics for CriticValues {
    fn safety_value(&self) -> f64 {
        self.safety
    }

    fn cost_value(&self) -> f64 {
        self.cost
    }
}

/// `σ − (−h)ⁿ + kḣ`. The power keeps the sign of `−h`, so `φ` keeps
/// growing with the violation once `h > 0`.
pub fn safety_index(h: f64, h_dot: f64, sigma: f64, n: f64, k: f64) -> f64 {
    let m = -h;
    sigma - m.signum() * m.abs().powf(n) + k * h_dot
}

/// Constraint value; `≤ 0` means satisfied.
///
/// `Cbf` and `SafetyIndex` only read `sample`. For the safety index, `ḣ` at
/// `s′` reuses the same finite difference, so `φ(s′)` needs no second step.
pub fn constraint_value(
    kind: &ConstraintKind,
    sample: &ConstraintSample,
    critics: Option<&dyn ConstraintCritics>,
) -> Result<f64, ConstraintError> {
    let need = |op| critics.ok_or(ConstraintError::KindMismatch { op, kind: kind.name() });
    Ok(match *kind {
        ConstraintKind::Reachability => need("constraint_value")?.safety_value(),
        ConstraintKind::CumulativeCost { threshold } => need("constraint_value")?.cost_value() - threshold,
        ConstraintKind::Cbf { mu } => sample.h_dot() + mu * sample.h,
        ConstraintKind::SafetyIndex { sigma, n, k, eta_d } => {
            let hd = sample.h_dot();
            let phi = safety_index(sample.h, hd, sigma, n, k);
            let phi_next = safety_index(sample.h_next, hd, sigma, n, k);
            si_constraint(phi, phi_next, eta_d)
        }
        ConstraintKind::RewardShaping { .. } => 0.0,
    })
}

/// `φ(s′) − max{φ(s) − η_D, 0}`.
pub fn si_constraint(phi: f64, phi_next: f64, eta_d: f64) -> f64 {
    phi_next - (phi - eta_d).max(0.0)
}

pub fn shape_reward(kind: &ConstraintKind, r: f64, h: f64) -> Result<f64, ConstraintError> {
    match *kind {
        ConstraintKind::RewardShaping { rho } => Ok(r - rho * h),
        _ => Err(ConstraintError::KindMismatch { op: "shape_reward", kind: kind.name() }),
    }
}
