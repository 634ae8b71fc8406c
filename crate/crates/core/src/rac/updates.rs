//! Gradients of the four coupled losses on one minibatch.

use ndarray::{Array2, ArrayView2};

use super::nets::{Batch, Networks};
use crate::approx::Tape;
use crate::constraints::ConstraintKind;
use crate::env::cost_of;
use crate::error::{Error, Result};

/// Loss (or objective) value and its parameter gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Grad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

fn check(batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

fn finite(g: Grad, what: &'static str) -> Result<Grad> {
    if !g.loss.is_finite() || g.grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(g)
}

fn column(t: &Tape) -> Vec<f64> {
    t.output().column(0).to_vec()
}

fn col_view(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((v.len(), 1), v).expect("column shape")
}

/// Critic input `[s̃′, π(s̃′)]` for the next states.
fn next_policy_input(nets: &Networks, batch: &Batch) -> Result<Array2<f64>> {
    let a_next = nets.actor.forward_batch(batch.s_next.view())?;
    Ok(nets.norm.critic_input(batch.s_next.view(), a_next.output().view()))
}

/// `(1 − γ)·h + γ·max{h, next}`.
pub fn reachability_target(h: f64, next: f64, gamma: f64) -> f64 {
    (1.0 - gamma) * h + gamma * h.max(next)
}

/// Value of an absorbing state that pays `x` forever.
fn absorbing(x: f64, gamma: f64) -> f64 {
    x / (1.0 - gamma)
}

/// TD targets `r + γ·Q_tgt(s′, π(s′))`. An exit is absorbing: its last
/// reward repeats forever.
pub fn critic_targets(nets: &Networks, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
    let x_next = next_policy_input(nets, batch)?;
    let q_next = column(&nets.critic_target.forward_batch(x_next.view())?);
    Ok((0..batch.len())
        .map(|i| {
            let next = if batch.exit[i] { absorbing(batch.r[i], gamma) } else { q_next[i] };
            batch.r[i] + gamma * next
        })
        .collect())
}

/// Regression targets of the constraint network.
pub fn safety_targets(nets: &Networks, batch: &Batch, kind: &ConstraintKind, gamma: f64, exit_violation: f64) -> Result<Vec<f64>> {
    let n = batch.len();
    match kind {
        ConstraintKind::Reachability | ConstraintKind::CumulativeCost { .. } => {
            let x_next = next_policy_input(nets, batch)?;
            let q_next = column(&nets.safety_target.forward_batch(x_next.view())?);
            Ok((0..n)
                .map(|i| match kind {
                    ConstraintKind::Reachability => {
                        let next = if batch.exit[i] { batch.h_next[i].max(exit_violation) } else { q_next[i] };
                        reachability_target(batch.h[i], next, gamma)
                    }
                    _ => {
                        let next = if batch.exit[i] { absorbing(f64::from(cost_of(batch.h_next[i])), gamma) } else { q_next[i] };
                        batch.c[i] + gamma * next
                    }
                })
                .collect())
        }
        ConstraintKind::Cbf { .. } | ConstraintKind::SafetyIndex { .. } => Ok(batch.sampled_constraint.clone()),
        ConstraintKind::RewardShaping { .. } => Ok(vec![0.0; n]),
    }
}

/// Mean of `½(f(x) − y)²` and its gradient.
fn regression(net: &crate::approx::Mlp, x: &Array2<f64>, y: &[f64]) -> Result<Grad> {
    let tape = net.forward_batch(x.view())?;
    let n = y.len() as f64;
    let out = column(&tape);
    let diff: Vec<f64> = out.iter().zip(y).map(|(o, t)| o - t).collect();
    let loss = diff.iter().map(|d| 0.5 * d * d).sum::<f64>() / n;
    let up: Vec<f64> = diff.iter().map(|d| d / n).collect();
    let (grad, _) = net.backward(&tape, col_view(&up))?;
    Ok(Grad { loss, grad })
}

/// Gradient in ω of the mean squared TD error.
pub fn critic_update(nets: &Networks, batch: &Batch, gamma: f64) -> Result<Grad> {
    check(batch)?;
    let y = critic_targets(nets, batch, gamma)?;
    let x = nets.norm.critic_input(batch.s.view(), batch.a.view());
    finite(regression(&nets.critic, &x, &y)?, "critic gradient")
}

/// Gradient in φ of the constraint-network regression loss.
pub fn safety_critic_update(nets: &Networks, batch: &Batch, kind: &ConstraintKind, gamma: f64, exit_violation: f64) -> Result<Grad> {
    check(batch)?;
    let y = safety_targets(nets, batch, kind, gamma, exit_violation)?;
    let x = nets.norm.critic_input(batch.s.view(), batch.a.view());
    finite(regression(&nets.safety, &x, &y)?, "safety critic gradient")
}

fn threshold(kind: &ConstraintKind) -> f64 {
    match kind {
        ConstraintKind::CumulativeCost { threshold } => *threshold,
        _ => 0.0,
    }
}

/// Gradient in θ of `mean(−Q(s, π(s)) + λ(s)·C(s, π(s)))`, to be descended.
/// `C` is the constraint network output (minus the threshold for the
/// cumulative cost); `λ` is held fixed.
pub fn actor_update(nets: &Networks, batch: &Batch, kind: &ConstraintKind) -> Result<Grad> {
    check(batch)?;
    let n = batch.len() as f64;
    let a_tape = nets.actor.forward_batch(batch.s.view())?;
    let x = nets.norm.critic_input(batch.s.view(), a_tape.output().view());
    let q_tape = nets.critic.forward_batch(x.view())?;
    let q = column(&q_tape);
    let mut loss = -q.iter().sum::<f64>() / n;
    let up_q = vec![-1.0 / n; batch.len()];
    let (_, dq) = nets.critic.backward(&q_tape, col_view(&up_q))?;
    let mut da = nets.norm.action_grad(&dq);
    if nets.multiplier.is_some() {
        let lam = nets.lambdas(&batch.s)?;
        let c_tape = nets.safety.forward_batch(x.view())?;
        let eta = threshold(kind);
        loss += column(&c_tape).iter().zip(&lam).map(|(c, l)| l * (c - eta)).sum::<f64>() / n;
        let up_c: Vec<f64> = lam.iter().map(|l| l / n).collect();
        let (_, dc) = nets.safety.backward(&c_tape, col_view(&up_c))?;
        da += &nets.norm.action_grad(&dc);
    }
    let (grad, _) = nets.actor.backward(&a_tape, da.view())?;
    finite(Grad { loss, grad }, "actor gradient")
}

/// Ascent gradient in ξ of `mean(λ(s)·C(s, π(s)))`. `λ` is clamped at
/// `lambda_max`, where its gradient vanishes.
pub fn multiplier_update(nets: &Networks, batch: &Batch, kind: &ConstraintKind) -> Result<Grad> {
    check(batch)?;
    let Some(m) = &nets.multiplier else {
        return Ok(Grad { loss: 0.0, grad: Vec::new() });
    };
    let n = batch.len() as f64;
    let a = nets.actor.forward_batch(batch.s.view())?;
    let x = nets.norm.critic_input(batch.s.view(), a.output().view());
    let eta = threshold(kind);
    let c: Vec<f64> = column(&nets.safety.forward_batch(x.view())?).iter().map(|v| v - eta).collect();
    let tape = m.forward_batch(nets.multiplier_input(&batch.s).view())?;
    let raw = column(&tape);
    let mut objective = 0.0;
    let mut up = Vec::with_capacity(raw.len());
    for (r, ci) in raw.iter().zip(&c) {
        objective += r.min(nets.lambda_max) * ci / n;
        up.push(if *r > nets.lambda_max { 0.0 } else { ci / n });
    }
    let (grad, _) = m.backward(&tape, col_view(&up))?;
    finite(Grad { loss: objective, grad }, "multiplier gradient")
}
