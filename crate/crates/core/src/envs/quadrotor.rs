//! Planar quadrotor tracking a counter-clockwise circle.
//!
//! State layout (12 entries): the vehicle `[x, ẋ, z, ż, θ, θ̇]` followed by
//! the next reference waypoint in the same layout. Actions are the two
//! normalized motor thrusts in `[0, 1]`; `0.5` on both motors is hover.

use std::f64::consts::TAU;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, Environment, StateVec};

pub const NUM_WAYPOINTS: usize = 360;

/// Evaluation starts `(x, z)`; the vehicle is at rest.
pub const EVAL_STARTS: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (0.0, 0.53), (0.0, 1.47)];

const Z: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Quadrotor2DSpec {
    pub mass: f64,
    pub inertia: f64,
    pub arm_length: f64,
    pub gravity: f64,
    pub dt: f64,
    pub max_episode_len: usize,
    pub q_diag: [f64; 6],
    pub r_diag: [f64; 2],
    pub center: (f64, f64),
    pub radius: f64,
    pub z_low: f64,
    pub z_high: f64,
    /// Episodes end when `|x| > region_x` or `|z| > region_z`.
    pub region_x: f64,
    pub region_z: f64,
}

impl Default for Quadrotor2DSpec {
    fn default() -> Self {
        Self {
            mass: 0.027,
            inertia: 1.4e-5,
            arm_length: 0.0397,
            gravity: 9.81,
            dt: 0.02,
            max_episode_len: NUM_WAYPOINTS,
            q_diag: [10.0, 1.0, 10.0, 1.0, 0.2, 0.2],
            r_diag: [1e-4, 1e-4],
            center: (0.0, 1.0),
            radius: 1.0,
            z_low: 0.5,
            z_high: 1.5,
            region_x: 2.0,
            region_z: 3.0,
        }
    }
}

/// `max{z_low − z, z − z_high}` on a state whose altitude is at index 2.
pub fn quad_constraint(s: &[f64], z_low: f64, z_high: f64) -> f64 {
    (z_low - s[Z]).max(s[Z] - z_high)
}

/// `−(x−x_ref)ᵀQ(x−x_ref) − (a−a_ref)ᵀR(a−a_ref)` with diagonal weights.
pub fn quad_reward(x: &[f64], a: &[f64], ref_x: &[f64], ref_a: &[f64], q: &[f64; 6], r: &[f64; 2]) -> f64 {
    let state_cost: f64 = (0..6).map(|i| q[i] * (x[i] - ref_x[i]).powi(2)).sum();
    let action_cost: f64 = (0..2).map(|i| r[i] * (a[i] - ref_a[i]).powi(2)).sum();
    -(state_cost + action_cost)
}

/// Position on the discretized reference circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WaypointCursor {
    index: usize,
}

impl WaypointCursor {
    pub fn new(index: usize) -> Self {
        Self { index: index % NUM_WAYPOINTS }
    }

    pub fn index(self) -> usize {
        self.index
    }

    /// Next waypoint in the counter-clockwise direction.
    pub fn advance(self) -> Self {
        Self::new(self.index + 1)
    }
}

#[derive(Clone, Debug)]
pub struct Quadrotor2D {
    params: Quadrotor2DSpec,
    spec: EnvSpec,
    waypoints: Vec<[f64; 6]>,
}

impl Quadrotor2D {
    pub fn new(params: Quadrotor2DSpec) -> Self {
        let period = NUM_WAYPOINTS as f64 * params.dt;
        let omega = TAU / period;
        let waypoints = (0..NUM_WAYPOINTS)
            .map(|k| {
                let phi = TAU * k as f64 / NUM_WAYPOINTS as f64;
                let (sin, cos) = phi.sin_cos();
                [
                    params.center.0 + params.radius * cos,
                    -params.radius * omega * sin,
                    params.center.1 + params.radius * sin,
                    params.radius * omega * cos,
                    0.0,
                    0.0,
                ]
            })
            .collect();
        // Largest violation inside the bounding region.
        let exit_violation = (params.z_low + params.region_z).max(params.region_z - params.z_high);
        let spec = EnvSpec {
            name: "quadrotor-2d".into(),
            state_dim: 12,
            action_dim: 2,
            action_low: vec![0.0, 0.0],
            action_high: vec![1.0, 1.0],
            dt: params.dt,
            max_episode_len: params.max_episode_len,
            termination: format!(
                "step count reaches {} or the vehicle leaves |x| <= {}, |z| <= {}",
                params.max_episode_len, params.region_x, params.region_z
            ),
            exit_violation,
            obs_scale: vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            probe_low: vec![-1.5, -1.0, 0.25, -1.5, -0.2, -0.1],
            probe_high: vec![1.5, 1.0, 1.75, 1.5, 0.2, 0.1],
        };
        Self { params, spec, waypoints }
    }

    pub fn params(&self) -> &Quadrotor2DSpec {
        &self.params
    }

    pub fn waypoint(&self, cursor: WaypointCursor) -> &[f64; 6] {
        &self.waypoints[cursor.index()]
    }

    /// Nearest waypoint to `(x, z)`, ties broken by the lower index.
    pub fn nearest_waypoint(&self, x: f64, z: f64) -> WaypointCursor {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, w) in self.waypoints.iter().enumerate() {
            let d = (w[0] - x).powi(2) + (w[2] - z).powi(2);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        WaypointCursor::new(best)
    }

    /// Recover the cursor of the reference stored in a full state.
    pub fn cursor_of(&self, s: &[f64]) -> WaypointCursor {
        let (cx, cz) = self.params.center;
        let phi = (s[8] - cz).atan2(s[6] - cx).rem_euclid(TAU);
        let k = (phi / TAU * NUM_WAYPOINTS as f64).round() as usize;
        WaypointCursor::new(k)
    }

    /// Hover thrust pair, the reference action.
    pub fn hover_action(&self) -> [f64; 2] {
        [0.5, 0.5]
    }

    fn with_reference(&self, vehicle: &[f64], cursor: WaypointCursor) -> StateVec {
        let mut s = Vec::with_capacity(12);
        s.extend_from_slice(&vehicle[..6]);
        s.extend_from_slice(self.waypoint(cursor));
        StateVec(s)
    }

    /// State at rest at `(x, z)` with the nearest waypoint as reference.
    pub fn static_state(&self, x: f64, z: f64) -> StateVec {
        let cursor = self.nearest_waypoint(x, z);
        self.with_reference(&[x, 0.0, z, 0.0, 0.0, 0.0], cursor)
    }

    /// Motor forces in newtons for normalized thrusts.
    pub fn thrust_newtons(&self, u: &[f64]) -> [f64; 2] {
        let per_motor_max = self.params.mass * self.params.gravity;
        [u[0] * per_motor_max, u[1] * per_motor_max]
    }
}

impl Default for Quadrotor2D {
    fn default() -> Self {
        Self::new(Quadrotor2DSpec::default())
    }
}

impl Environment for Quadrotor2D {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&self, rng: &mut dyn RngCore) -> StateVec {
        let x = rng.random_range(-1.5..=1.5);
        let xd = rng.random_range(-1.0..=1.0);
        let z = rng.random_range(0.25..=1.75);
        let zd = rng.random_range(-1.5..=1.5);
        let th = rng.random_range(-0.2..=0.2);
        let thd = rng.random_range(-0.1..=0.1);
        let cursor = self.nearest_waypoint(x, z);
        self.with_reference(&[x, xd, z, zd, th, thd], cursor)
    }

    fn constraint(&self, s: &[f64]) -> f64 {
        quad_constraint(s, self.params.z_low, self.params.z_high)
    }

    fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        quad_reward(&s[..6], a, &s[6..12], &self.hover_action(), &self.params.q_diag, &self.params.r_diag)
    }

    fn dynamics(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let [t1, t2] = self.thrust_newtons(a);
        let (x, xd, z, zd, th, thd) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        let total = t1 + t2;
        let xdd = total * th.sin() / p.mass;
        let zdd = total * th.cos() / p.mass - p.gravity;
        let thdd = (t2 - t1) * p.arm_length / p.inertia;
        let vehicle = [
            x + p.dt * xd,
            xd + p.dt * xdd,
            z + p.dt * zd,
            zd + p.dt * zdd,
            th + p.dt * thd,
            thd + p.dt * thdd,
        ];
        let next = self.cursor_of(s).advance();
        self.with_reference(&vehicle, next).0
    }

    fn in_region(&self, s: &[f64]) -> bool {
        s[0].abs() <= self.params.region_x && s[Z].abs() <= self.params.region_z
    }

    fn evaluation_starts(&self) -> Option<Vec<StateVec>> {
        Some(EVAL_STARTS.iter().map(|(x, z)| self.static_state(*x, *z)).collect())
    }

    fn complete_state(&self, s: &[f64]) -> StateVec {
        let mut vehicle = [0.0; 6];
        let n = s.len().min(6);
        vehicle[..n].copy_from_slice(&s[..n]);
        let cursor = self.nearest_waypoint(vehicle[0], vehicle[Z]);
        self.with_reference(&vehicle, cursor)
    }
}
