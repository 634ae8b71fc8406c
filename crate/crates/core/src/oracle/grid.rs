use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::OracleError;

/// One regular grid axis with `count` nodes from `lower` to `upper`
/// inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, count: usize) -> Self {
        Self { lower, upper, count }
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / (self.count - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.upper
        } else {
            self.lower + i as f64 * self.step()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Lower bracketing node and fractional offset in `[0, 1]`; `x` is
    /// clamped into the axis range first.
    fn bracket(&self, x: f64) -> (usize, f64) {
        let t = ((x.clamp(self.lower, self.upper) - self.lower) / self.step()).max(0.0);
        let i = (t.floor() as usize).min(self.count - 2);
        (i, (t - i as f64).clamp(0.0, 1.0))
    }
}

/// Regular rectangular grid; cells are nodes, stored row-major with axis 0
/// varying slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self, OracleError> {
        let g = Self { axes };
        g.validate()?;
        Ok(g)
    }

    /// Square grid `[lo, hi]^dims` with `n` nodes per axis.
    pub fn uniform(dims: usize, lo: f64, hi: f64, n: usize) -> Result<Self, OracleError> {
        Self::new(vec![Axis::new(lo, hi, n); dims])
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.axes.is_empty() {
            return Err(OracleError::InvalidGrid("no axes".into()));
        }
        for (k, a) in self.axes.iter().enumerate() {
            if a.count < 2 {
                return Err(OracleError::InvalidGrid(format!("axis {k} has fewer than 2 nodes")));
            }
            if !(a.lower < a.upper) || !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(OracleError::InvalidGrid(format!("axis {k} needs lower < upper")));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for k in (0..self.dims()).rev() {
            idx[k] = flat % self.axes[k].count;
            flat /= self.axes[k].count;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.count + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .zip(&self.axes)
            .map(|(i, a)| a.node(i))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Flat index of the node nearest to `p` (clamped into the grid).
    pub fn nearest(&self, p: &[f64]) -> usize {
        let idx: Vec<usize> = p
            .iter()
            .zip(&self.axes)
            .map(|(x, a)| {
                let t = ((x.clamp(a.lower, a.upper) - a.lower) / a.step()).round();
                (t as usize).min(a.count - 1)
            })
            .collect();
        self.flat_index(&idx)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(&self.axes).all(|(x, a)| a.contains(*x))
    }

    /// Multilinear interpolation stencil of `p` (clamped into the grid): the
    /// `2^dims` corner indices and weights. Weights sum to one.
    pub fn stencil(&self, p: &[f64]) -> Vec<(usize, f64)> {
        let brackets: Vec<(usize, f64)> =
            p.iter().zip(&self.axes).map(|(x, a)| a.bracket(*x)).collect();
        let d = self.dims();
        let mut out = Vec::with_capacity(1 << d);
        let mut idx = vec![0; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let (i, f) = brackets[k];
                if corner >> k & 1 == 1 {
                    idx[k] = i + 1;
                    w *= f;
                } else {
                    idx[k] = i;
                    w *= 1.0 - f;
                }
            }
            out.push((self.flat_index(&idx), w));
        }
        out
    }
}

/// Scalar field on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

const GRID_MAGIC: &[u8; 8] = b"RCRLGRD\x01";

impl ValueGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self, OracleError> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(OracleError::InvalidGrid(format!(
                "{} values for {} cells",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Evaluate `f` at every node.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = spec.points().map(|p| f(&p)).collect();
        Self { spec, values }
    }

    pub fn interpolate(&self, p: &[f64]) -> f64 {
        self.spec.stencil(p).into_iter().map(|(i, w)| w * self.values[i]).sum()
    }

    /// Sub-zero level set.
    pub fn kernel(&self) -> KernelMask {
        KernelMask {
            spec: self.spec.clone(),
            mask: self.values.iter().map(|v| *v <= 0.0).collect(),
        }
    }

    pub fn sup_distance(&self, other: &ValueGrid) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// CSV with header `axis0,...,axis{d-1},value`, one row per cell in
    /// row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_csv_header(&mut w, self.spec.dims())?;
        for (i, v) in self.values.iter().enumerate() {
            for x in self.spec.point(i) {
                write!(w, "{x},")?;
            }
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    /// Parse the CSV produced by [`ValueGrid::write_csv`]. Rejects grids with
    /// missing or out-of-order cells.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, OracleError> {
        let bad = |m: String| OracleError::InvalidGrid(m);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty csv".into()))?
            .map_err(|e| bad(e.to_string()))?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let dims = cols.len().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| bad("header".into()))?;
        for (k, c) in cols.iter().take(dims).enumerate() {
            if *c != format!("axis{k}") {
                return Err(bad(format!("unexpected header column {c}")));
            }
        }
        if cols[dims] != "value" {
            return Err(bad("last header column must be value".into()));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| bad(e.to_string()))?;
            if row.len() != dims + 1 {
                return Err(bad(format!("row has {} fields", row.len())));
            }
            rows.push(row);
        }
        let mut axes = Vec::with_capacity(dims);
        for k in 0..dims {
            let mut coords: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            coords.sort_by(f64::total_cmp);
            coords.dedup();
            if coords.len() < 2 {
                return Err(bad(format!("axis {k} has fewer than 2 distinct values")));
            }
            axes.push(Axis::new(coords[0], coords[coords.len() - 1], coords.len()));
        }
        let spec = GridSpec::new(axes)?;
        if rows.len() != spec.len() {
            return Err(bad(format!("{} rows for a {}-cell grid", rows.len(), spec.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            let p = spec.point(i);
            let tol = 1e-9;
            if p.iter().zip(row).any(|(a, b)| (a - b).abs() > tol * (1.0 + a.abs())) {
                return Err(bad(format!("row {i} is not the expected cell")));
            }
        }
        let values = rows.into_iter().map(|r| r[dims]).collect();
        ValueGrid::new(spec, values)
    }

    /// Binary layout: 8-byte magic, two little-endian `u32` axis counts,
    /// then `lower, upper` per axis and the values, all `f64` little-endian.
    /// Only 2-D grids.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        if self.spec.dims() != 2 {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "binary export is 2-D only"));
        }
        w.write_all(GRID_MAGIC)?;
        for a in &self.spec.axes {
            w.write_all(&(a.count as u32).to_le_bytes())?;
        }
        for a in &self.spec.axes {
            w.write_all(&a.lower.to_le_bytes())?;
            w.write_all(&a.upper.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, OracleError> {
        let bad = |m: &str| OracleError::InvalidGrid(m.to_string());
        let mut header = [0u8; 16];
        r.read_exact(&mut header).map_err(|_| bad("short header"))?;
        if &header[..8] != GRID_MAGIC {
            return Err(bad("bad magic"));
        }
        let n0 = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let n1 = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut f = || -> Result<f64, OracleError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(f64::from_le_bytes(b))
        };
        let a0 = Axis::new(f()?, f()?, n0);
        let a1 = Axis::new(f()?, f()?, n1);
        let spec = GridSpec::new(vec![a0, a1])?;
        let values = (0..spec.len()).map(|_| f()).collect::<Result<Vec<_>, _>>()?;
        ValueGrid::new(spec, values)
    }
}

fn write_csv_header<W: Write>(w: &mut W, dims: usize) -> io::Result<()> {
    for k in 0..dims {
        write!(w, "axis{k},")?;
    }
    writeln!(w, "value")
}

/// Boolean feasibility mask aligned with a grid; `true` means feasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMask {
    pub spec: GridSpec,
    pub mask: Vec<bool>,
}

impl KernelMask {
    /// Mask value at the node nearest to `p`.
    pub fn at(&self, p: &[f64]) -> bool {
        self.mask[self.spec.nearest(p)]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Fraction of cells marked feasible.
    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.mask.len() as f64
    }

    /// Fraction of cells on which both masks agree.
    pub fn agreement(&self, other: &KernelMask) -> f64 {
        let same = self.mask.iter().zip(&other.mask).filter(|(a, b)| a == b).count();
        same as f64 / self.mask.len() as f64
    }

    pub fn iou(&self, other: &KernelMask) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.mask.iter().zip(&other.mask) {
            inter += usize::from(*a && *b);
            union += usize::from(*a || *b);
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Cells feasible here but not in `other`, ignoring cells within `band`
    /// grid steps (Chebyshev distance) of a cell of `other` that is feasible.
    pub fn excess_over(&self, other: &KernelMask, band: usize) -> usize {
        let grown = other.dilate(band);
        self.mask.iter().zip(&grown.mask).filter(|(a, b)| **a && !**b).count()
    }

    /// Mask grown by `cells` steps in every direction (Chebyshev ball).
    pub fn dilate(&self, cells: usize) -> KernelMask {
        self.morph(cells, true)
    }

    /// Mask shrunk by `cells` steps: a cell survives only if every cell
    /// within Chebyshev distance `cells` is set.
    pub fn erode(&self, cells: usize) -> KernelMask {
        self.morph(cells, false)
    }

    fn morph(&self, cells: usize, grow: bool) -> KernelMask {
        if cells == 0 {
            return self.clone();
        }
        let d = self.spec.dims();
        let r = cells as isize;
        let offsets: Vec<Vec<isize>> = (0..(2 * r + 1).pow(d as u32))
            .map(|mut k| {
                (0..d)
                    .map(|_| {
                        let o = k % (2 * r + 1) - r;
                        k /= 2 * r + 1;
                        o
                    })
                    .collect()
            })
            .collect();
        let mask = (0..self.mask.len())
            .map(|i| {
                let idx = self.spec.multi_index(i);
                let mut hit = !grow;
                for off in &offsets {
                    let mut nb = Vec::with_capacity(d);
                    let mut inside = true;
                    for k in 0..d {
                        let j = idx[k] as isize + off[k];
                        if j < 0 || j >= self.spec.axes[k].count as isize {
                            inside = false;
                            break;
                        }
                        nb.push(j as usize);
                    }
                    let v = inside && self.mask[self.spec.flat_index(&nb)];
                    if grow && v {
                        hit = true;
                        break;
                    }
                    if !grow && !v {
                        hit = false;
                        break;
                    }
                }
                hit
            })
            .collect();
        KernelMask { spec: self.spec.clone(), mask }
    }

    /// CSV with the same layout as [`ValueGrid::write_csv`], values 1/0.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write_csv_header(&mut w, self.spec.dims())?;
        for (i, m) in self.mask.iter().enumerate() {
            for x in self.spec.point(i) {
                write!(w, "{x},")?;
            }
            writeln!(w, "{}", u8::from(*m))?;
        }
        Ok(())
    }
}
