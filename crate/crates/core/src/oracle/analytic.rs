use super::grid::{GridSpec, KernelMask};
use crate::error::OracleError;

/// Viability kernel of the continuous-time double integrator under maximal
/// braking: inside the box and able to stop before the wall it is moving
/// toward, `x₂²/(2·a_max)` being the braking distance.
pub fn analytic_kernel(grid: &GridSpec, a_max: f64, bound: f64) -> Result<KernelMask, OracleError> {
    grid.validate()?;
    if grid.dims() != 2 {
        return Err(OracleError::DimensionMismatch { grid: grid.dims(), env: 2 });
    }
    let mask = grid.points().map(|p| braking_feasible(p[0], p[1], a_max, bound)).collect();
    Ok(KernelMask { spec: grid.clone(), mask })
}

pub fn braking_feasible(x1: f64, x2: f64, a_max: f64, bound: f64) -> bool {
    let stop = x2 * x2 / (2.0 * a_max);
    x1.abs().max(x2.abs()) <= bound
        && (x2 <= 0.0 || x1 + stop <= bound)
        && (x2 >= 0.0 || -x1 + stop <= bound)
}
