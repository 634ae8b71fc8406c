use serde::{Deserialize, Serialize};

use crate::error::ApproxError;

/// Learning rate annealed linearly from `start` to `end` over `steps` updates,
/// then held at `end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub steps: u64,
}

impl LinearSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { start: lr, end: lr, steps: 1 }
    }

    pub fn at(&self, k: u64) -> f64 {
        if self.steps == 0 || k >= self.steps {
            return self.end;
        }
        let frac = k as f64 / self.steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Projection applied around each update: the gradient is rescaled to a
/// global L2 norm of at most `clip_norm`, and parameters are clamped to
/// `[-box_limit, box_limit]` when set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub clip_norm: Option<f64>,
    pub box_limit: Option<f64>,
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self { clip_norm: Some(10.0), box_limit: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LinearSchedule,
    pub projection: ProjectionSpec,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl Adam {
    pub fn new(num_params: usize, schedule: LinearSchedule) -> Self {
        Self {
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
            projection: ProjectionSpec::default(),
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn with_projection(mut self, projection: ProjectionSpec) -> Self {
        self.projection = projection;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate the next update will use.
    pub fn current_lr(&self) -> f64 {
        self.schedule.at(self.step)
    }

    /// One descent step on `params` at the scheduled rate. Returns the
    /// learning rate used.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<f64, ApproxError> {
        let lr = self.schedule.at(self.step);
        self.step_with_lr(params, grad, lr)
    }

    /// One descent step with an externally supplied learning rate.
    pub fn step_with_lr(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<f64, ApproxError> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(ApproxError::Dimension { expected: self.m.len(), got: grad.len() });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ApproxError::NonFiniteGradient);
        }
        let scale = match self.projection.clip_norm {
            Some(c) => {
                let n = l2_norm(grad);
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i] * scale;
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
            if let Some(b) = self.projection.box_limit {
                params[i] = params[i].clamp(-b, b);
            }
        }
        Ok(lr)
    }
}

/// `target ← τ·online + (1 − τ)·target`.
pub fn polyak_update(target: &mut [f64], online: &[f64], tau: f64) -> Result<(), ApproxError> {
    if target.len() != online.len() {
        return Err(ApproxError::Dimension { expected: target.len(), got: online.len() });
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let s = LinearSchedule { start: 1e-3, end: 1e-5, steps: 100 };
        assert_eq!(s.at(0), 1e-3);
        assert!((s.at(50) - 0.5 * (1e-3 + 1e-5)).abs() < 1e-18);
        assert_eq!(s.at(100), 1e-5);
        assert_eq!(s.at(1000), 1e-5);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut opt = Adam::new(3, LinearSchedule::constant(0.01));
        let mut p = vec![1.0, 1.0, 1.0];
        opt.step(&mut p, &[0.5, -2.0, 0.0]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] - 1.01).abs() < 1e-9);
        assert_eq!(p[2], 1.0);
    }

    #[test]
    fn clipping_bounds_the_effective_gradient() {
        let proj = ProjectionSpec { clip_norm: Some(1.0), box_limit: None };
        let mut a = Adam::new(2, LinearSchedule::constant(0.1)).with_projection(proj);
        let mut b = a.clone();
        let (mut pa, mut pb) = (vec![0.0, 0.0], vec![0.0, 0.0]);
        a.step(&mut pa, &[30.0, 40.0]).unwrap();
        b.step(&mut pb, &[0.6, 0.8]).unwrap();
        assert!((pa[0] - pb[0]).abs() < 1e-12 && (pa[1] - pb[1]).abs() < 1e-12);
    }

    #[test]
    fn box_projection_clamps() {
        let proj = ProjectionSpec { clip_norm: None, box_limit: Some(0.05) };
        let mut a = Adam::new(1, LinearSchedule::constant(1.0)).with_projection(proj);
        let mut p = vec![0.0];
        a.step(&mut p, &[-1.0]).unwrap();
        assert_eq!(p[0], 0.05);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut a = Adam::new(2, LinearSchedule::constant(0.1));
        let mut p = vec![1.0, 2.0];
        assert!(matches!(a.step(&mut p, &[f64::NAN, 0.0]), Err(ApproxError::NonFiniteGradient)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(a.steps_taken(), 0);
    }

    #[test]
    fn zero_gradient_leaves_params_and_identical_state_is_deterministic() {
        let mut a = Adam::new(2, LinearSchedule::constant(0.1));
        let mut p = vec![0.3, -0.2];
        a.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.3, -0.2]);
        let mut b = a.clone();
        let mut q = p.clone();
        a.step(&mut p, &[1.0, 2.0]).unwrap();
        b.step(&mut q, &[1.0, 2.0]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn clipped_gradient_norm_equals_threshold() {
        // After one step the first moment is (1 − β₁)·clipped gradient.
        let mut a = Adam::new(2, LinearSchedule::constant(0.1))
            .with_projection(ProjectionSpec { clip_norm: Some(2.0), box_limit: None });
        let mut p = vec![0.0, 0.0];
        a.step(&mut p, &[300.0, 400.0]).unwrap();
        let clipped: Vec<f64> = a.m.iter().map(|m| m / (1.0 - a.beta1)).collect();
        assert!((l2_norm(&clipped) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = Adam::new(2, LinearSchedule { start: 0.05, end: 1e-4, steps: 3000 });
        let mut p = vec![3.0, -2.0];
        for _ in 0..3000 {
            let g = vec![2.0 * (p[0] - 1.0), 20.0 * (p[1] + 0.5)];
            a.step(&mut p, &g).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-2 && (p[1] + 0.5).abs() < 1e-2, "{p:?}");
    }

    #[test]
    fn polyak_mixes() {
        let mut t = vec![0.0, 10.0];
        polyak_update(&mut t, &[1.0, 0.0], 0.25).unwrap();
        assert_eq!(t, vec![0.25, 7.5]);
        polyak_update(&mut t, &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(t, vec![1.0, 0.0]);
        assert!(polyak_update(&mut t, &[1.0], 0.5).is_err());
    }
}
