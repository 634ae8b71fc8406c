use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{GridSpec, ValueGrid};
use crate::env::{ActionVec, Done, Environment, StateVec};
use crate::envs::DoubleIntegrator;
use crate::error::OracleError;

/// Settings for the grid dynamic-programming solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub gamma: f64,
    /// Evenly spaced action samples per action axis.
    pub action_samples: usize,
    /// Stop when the sup-norm change of a sweep falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { gamma: 0.99, action_samples: 21, tolerance: 1e-6, max_sweeps: 100_000 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(OracleError::InvalidConfig(format!("gamma {} not in (0, 1)", self.gamma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(OracleError::InvalidConfig("tolerance must be positive".into()));
        }
        if self.action_samples == 0 || self.max_sweeps == 0 {
            return Err(OracleError::InvalidConfig("action_samples and max_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where one `(cell, action)` pair lands.
#[derive(Clone, Copy, Debug)]
enum Successor {
    /// Interpolated from the grid, floored at `floor` (which is `-inf` when
    /// the successor lies inside the grid, `h(s')` when it was clamped).
    Grid { offset: u32, floor: f64 },
    /// Left the bounding region; value is fixed.
    Exit(f64),
}

/// The discounted safety Bellman operator on a grid,
/// `V(s) ← (1−γ)h(s) + γ·max{h(s), min_a V(s')}`, with the successor table
/// precomputed. With a single action per cell this is the policy evaluation
/// operator.
#[derive(Clone, Debug)]
pub struct SafetyBellman {
    grid: GridSpec,
    gamma: f64,
    h: Vec<f64>,
    actions_per_cell: usize,
    successors: Vec<Successor>,
    corner_idx: Vec<u32>,
    corner_w: Vec<f64>,
    stride: usize,
}

fn check_dims(env: &dyn Environment, grid: &GridSpec) -> Result<(), OracleError> {
    grid.validate()?;
    let sd = env.spec().state_dim;
    if sd != grid.dims() {
        return Err(OracleError::DimensionMismatch { grid: grid.dims(), env: sd });
    }
    Ok(())
}

/// Cartesian product of evenly spaced samples per action axis.
pub fn action_lattice(env: &dyn Environment, samples: usize) -> Vec<Vec<f64>> {
    let spec = env.spec();
    let axes: Vec<Vec<f64>> = spec
        .action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(lo, hi)| {
            if samples == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..samples)
                    .map(|i| {
                        if i + 1 == samples {
                            *hi
                        } else {
                            lo + (hi - lo) * i as f64 / (samples - 1) as f64
                        }
                    })
                    .collect()
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

impl SafetyBellman {
    /// Operator minimizing over the given candidate actions at every cell.
    pub fn with_actions(
        env: &dyn Environment,
        grid: &GridSpec,
        gamma: f64,
        actions: &[Vec<f64>],
    ) -> Result<Self, OracleError> {
        Self::build(env, grid, gamma, actions.len(), |_, k| actions[k].clone())
    }

    /// Single-action operator for a fixed deterministic policy.
    pub fn for_policy(
        env: &dyn Environment,
        grid: &GridSpec,
        gamma: f64,
        policy: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self, OracleError> {
        Self::build(env, grid, gamma, 1, |p, _| policy(p))
    }

    fn build(
        env: &dyn Environment,
        grid: &GridSpec,
        gamma: f64,
        actions_per_cell: usize,
        mut action: impl FnMut(&[f64], usize) -> Vec<f64>,
    ) -> Result<Self, OracleError> {
        check_dims(env, grid)?;
        let n = grid.len();
        let stride = 1usize << grid.dims();
        let mut h = Vec::with_capacity(n);
        let mut successors = Vec::with_capacity(n * actions_per_cell);
        let mut corner_idx = Vec::new();
        let mut corner_w = Vec::new();
        for i in 0..n {
            let p = grid.point(i);
            h.push(env.constraint(&p));
            let s = StateVec(p.clone());
            for k in 0..actions_per_cell {
                let a = ActionVec(action(&p, k));
                let t = env.step(&s, &a)?;
                let succ = if t.done == Done::Exit {
                    Successor::Exit(env.spec().exit_value(t.h_next))
                } else {
                    let floor = if grid.contains(&t.s_next.0) { f64::NEG_INFINITY } else { t.h_next };
                    let offset = corner_idx.len() as u32;
                    for (ci, w) in grid.stencil(&t.s_next.0) {
                        corner_idx.push(ci as u32);
                        corner_w.push(w);
                    }
                    Successor::Grid { offset, floor }
                };
                successors.push(succ);
            }
        }
        Ok(Self {
            grid: grid.clone(),
            gamma,
            h,
            actions_per_cell,
            successors,
            corner_idx,
            corner_w,
            stride,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn constraint_values(&self) -> &[f64] {
        &self.h
    }

    fn successor_value(&self, succ: Successor, v: &[f64]) -> f64 {
        match succ {
            Successor::Exit(x) => x,
            Successor::Grid { offset, floor } => {
                let o = offset as usize;
                let mut acc = 0.0;
                for j in o..o + self.stride {
                    acc += self.corner_w[j] * v[self.corner_idx[j] as usize];
                }
                acc.max(floor)
            }
        }
    }

    /// Apply the operator to `v`, writing into `out` and the minimizing
    /// action index (first on ties) into `argmin`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64], argmin: &mut [usize]) {
        let g = self.gamma;
        for (i, (o, am)) in out.iter_mut().zip(argmin.iter_mut()).enumerate() {
            let base = i * self.actions_per_cell;
            let mut best = f64::INFINITY;
            let mut best_k = 0;
            for k in 0..self.actions_per_cell {
                let val = self.successor_value(self.successors[base + k], v);
                if val < best {
                    best = val;
                    best_k = k;
                }
            }
            let h = self.h[i];
            *o = (1.0 - g) * h + g * h.max(best);
            *am = best_k;
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let mut am = vec![0; v.len()];
        self.apply_into(v, &mut out, &mut am);
        out
    }

    /// `‖B v − B w‖∞ / ‖v − w‖∞`, defined as 0 when `v == w`.
    pub fn contraction_ratio(&self, v: &[f64], w: &[f64]) -> f64 {
        let den = v.iter().zip(w).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if den == 0.0 {
            return 0.0;
        }
        let bv = self.apply(v);
        let bw = self.apply(w);
        let num = bv.iter().zip(&bw).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        num / den
    }

    /// Synchronous value iteration from `V₀ = h` until the sup-norm change
    /// drops below `tolerance`.
    pub fn solve(&self, tolerance: f64, max_sweeps: usize) -> Result<Solution, OracleError> {
        let n = self.h.len();
        let mut v = self.h.clone();
        let mut next = vec![0.0; n];
        let mut argmin = vec![0; n];
        let mut residuals = Vec::new();
        for _ in 0..max_sweeps {
            self.apply_into(&v, &mut next, &mut argmin);
            let r = v.iter().zip(&next).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            std::mem::swap(&mut v, &mut next);
            residuals.push(r);
            if r < tolerance {
                return Ok(Solution {
                    values: ValueGrid { spec: self.grid.clone(), values: v },
                    greedy: argmin,
                    residuals,
                });
            }
        }
        Err(OracleError::NotConverged {
            sweeps: max_sweeps,
            residual: residuals.last().copied().unwrap_or(f64::NAN),
        })
    }
}

/// Converged value function together with solver diagnostics.
#[derive(Clone, Debug)]
pub struct Solution {
    pub values: ValueGrid,
    /// Minimizing action index per cell from the final sweep.
    pub greedy: Vec<usize>,
    /// Sup-norm change of each sweep.
    pub residuals: Vec<f64>,
}

impl Solution {
    pub fn sweeps(&self) -> usize {
        self.residuals.len()
    }
}

/// Optimal safety value on `grid` by value iteration on the discounted
/// safety Bellman equation.
pub fn solve_sbe(env: &dyn Environment, grid: &GridSpec, cfg: &OracleConfig) -> Result<SbeSolution, OracleError> {
    cfg.validate()?;
    let actions = action_lattice(env, cfg.action_samples);
    let op = SafetyBellman::with_actions(env, grid, cfg.gamma, &actions)?;
    let solution = op.solve(cfg.tolerance, cfg.max_sweeps)?;
    Ok(SbeSolution { solution, actions })
}

/// [`Solution`] of the optimal problem plus the sampled action set.
#[derive(Clone, Debug)]
pub struct SbeSolution {
    pub solution: Solution,
    pub actions: Vec<Vec<f64>>,
}

impl SbeSolution {
    pub fn values(&self) -> &ValueGrid {
        &self.solution.values
    }

    /// Minimizing action at each grid node, as a policy that looks up the
    /// nearest node.
    pub fn greedy_policy(&self) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |s: &[f64]| self.actions[self.solution.greedy[self.solution.values.spec.nearest(s)]].clone()
    }
}

/// Safety value of a fixed policy: the fixed point of
/// `V(s) ← (1−γ)h(s) + γ·max{h(s), V(s')}` with `s'` following the policy.
pub fn evaluate_policy_safety(
    env: &dyn Environment,
    policy: &dyn Fn(&[f64]) -> Vec<f64>,
    grid: &GridSpec,
    cfg: &OracleConfig,
) -> Result<Solution, OracleError> {
    cfg.validate()?;
    let op = SafetyBellman::for_policy(env, grid, cfg.gamma, policy)?;
    op.solve(cfg.tolerance, cfg.max_sweeps)
}

/// Largest observed `‖B Q − B Q̂‖∞ / ‖Q − Q̂‖∞` over random value pairs for
/// the policy operator of the double integrator on a 41×41 grid. Each trial
/// draws a random per-cell policy and a random pair.
pub fn contraction_check(cfg: &OracleConfig, trials: usize, seed: u64) -> Result<f64, OracleError> {
    cfg.validate()?;
    let env = DoubleIntegrator::default();
    let grid = GridSpec::uniform(2, -5.0, 5.0, 41)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        let actions: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let lookup = |p: &[f64]| {
            let i0 = ((p[0] + 5.0) / 0.25).round() as usize;
            let i1 = ((p[1] + 5.0) / 0.25).round() as usize;
            vec![actions[i0 * 41 + i1]]
        };
        let op = SafetyBellman::for_policy(&env, &grid, cfg.gamma, &lookup)?;
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let q: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-10.0..10.0)).collect();
        let q_hat: Vec<f64> = q.iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
        worst = worst.max(op.contraction_ratio(&q, &q_hat));
    }
    Ok(worst)
}
