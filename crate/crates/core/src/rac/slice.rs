use serde::{Deserialize, Serialize};

use super::nets::Networks;
use crate::constraints::ConstraintKind;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::oracle::{Axis, GridSpec, ValueGrid};

/// A 2-D cut through state space. Coordinates not on `axes` come from
/// `base`; the rest of the state (for the quadrotor, the reference
/// waypoint) is filled in by [`Environment::complete_state`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    /// State indices plotted on axis 0 and axis 1.
    pub axes: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    pub base: Vec<f64>,
    /// Repeats the slice with `base[axis]` set to each value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SliceSweep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSweep {
    pub axis: usize,
    pub values: Vec<f64>,
}

impl SliceSpec {
    pub fn grid(&self) -> Result<GridSpec> {
        if self.axes.len() != 2 || self.lower.len() != 2 || self.upper.len() != 2 || self.counts.len() != 2 {
            return Err(Error::Config(format!("slice must be 2-D, got {} axes", self.axes.len())));
        }
        let axes = (0..2).map(|i| Axis::new(self.lower[i], self.upper[i], self.counts[i])).collect();
        GridSpec::new(axes).map_err(|e| Error::Config(format!("slice grid: {e}")))
    }

    /// Full-state slice of a 2-D environment over `grid`.
    pub fn full(grid: &GridSpec) -> Self {
        Self {
            axes: vec![0, 1],
            lower: grid.axes.iter().map(|a| a.lower).collect(),
            upper: grid.axes.iter().map(|a| a.upper).collect(),
            counts: grid.axes.iter().map(|a| a.count).collect(),
            base: vec![0.0, 0.0],
            sweep: None,
        }
    }

    /// The concrete slices with file stems: `slice` without a sweep,
    /// `slice_{axis}_{i}` for the i-th sweep value.
    pub fn expand(&self) -> Result<Vec<(String, SliceSpec)>> {
        self.grid()?;
        let Some(sweep) = &self.sweep else {
            return Ok(vec![("slice".into(), self.clone())]);
        };
        if sweep.values.is_empty() {
            return Err(Error::Config("slice sweep has no values".into()));
        }
        if sweep.axis >= self.base.len() || self.axes.contains(&sweep.axis) {
            return Err(Error::Config(format!("sweep axis {} must be a base coordinate off the slice axes", sweep.axis)));
        }
        Ok(sweep
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut s = self.clone();
                s.sweep = None;
                s.base[sweep.axis] = *v;
                (format!("slice_{}_{i}", sweep.axis), s)
            })
            .collect())
    }
}

/// `F(s, π(s))` over the slice, `F` the learned constraint network (minus
/// the threshold for the cumulative cost). Its sub-zero set is the learned
/// feasible set.
pub fn export_slice(nets: &Networks, env: &dyn Environment, kind: &ConstraintKind, slice: &SliceSpec) -> Result<ValueGrid> {
    let grid = slice.grid()?;
    if let ConstraintKind::RewardShaping { .. } = kind {
        return Err(Error::Config("reward shaping has no learned constraint to slice".into()));
    }
    let dims = slice.base.len();
    if slice.axes.iter().any(|a| *a >= dims) || dims > env.spec().state_dim {
        return Err(Error::Config("slice axes must index into the base state".into()));
    }
    let states: Vec<Vec<f64>> = grid
        .points()
        .map(|p| {
            let mut s = slice.base.clone();
            s[slice.axes[0]] = p[0];
            s[slice.axes[1]] = p[1];
            env.complete_state(&s).0
        })
        .collect();
    let eta = match kind {
        ConstraintKind::CumulativeCost { threshold } => *threshold,
        _ => 0.0,
    };
    let values = nets.constraint_at_policy(&states)?.into_iter().map(|v| v - eta).collect();
    Ok(ValueGrid::new(grid, values)?)
}
