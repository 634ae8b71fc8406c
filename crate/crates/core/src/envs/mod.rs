//! Benchmark dynamics: the double integrator and the planar quadrotor
//! tracking task, plus a constant-constraint toy system for oracle checks.

mod double_integrator;
mod quadrotor;

pub use double_integrator::{di_constraint, di_reward, ConstantConstraint, DoubleIntegrator, DoubleIntegratorSpec};
pub use quadrotor::{
    quad_constraint, quad_reward, Quadrotor2D, Quadrotor2DSpec, WaypointCursor, EVAL_STARTS,
    NUM_WAYPOINTS,
};
