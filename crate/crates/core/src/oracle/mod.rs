//! Ground-truth feasible sets on grids: value iteration on the safety
//! Bellman equation, policy safety evaluation, and the closed-form braking
//! kernel of the double integrator.

mod analytic;
mod grid;
mod solver;

pub use analytic::{analytic_kernel, braking_feasible};
pub use grid::{Axis, GridSpec, KernelMask, ValueGrid};
pub use solver::{
    action_lattice, contraction_check, evaluate_policy_safety, solve_sbe, OracleConfig, SafetyBellman,
    SbeSolution, Solution,
};
