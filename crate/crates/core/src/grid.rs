//! Uniform time grids and trajectories sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `0 = t_0 < t_1 < ... < t_n = T` with spacing `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(step: f64, n_steps: usize) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Config(format!("grid step must be positive, got {step}")));
        }
        if n_steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        Ok(Self { step, n_steps })
    }

    /// Smallest grid with the given step whose horizon reaches `horizon`.
    pub fn covering(step: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let n = (horizon / step - 1e-9).ceil().max(1.0) as usize;
        Self::new(step, n)
    }

    /// Grid whose horizon `T = ceil(ln(1/tail_tol) / u_min)` makes the
    /// surviving mass `1 - rho(T) <= exp(-u_min T)` smaller than `tail_tol`.
    pub fn with_tail_tolerance(step: f64, tail_tol: f64, u_min: f64) -> Result<Self> {
        if !(tail_tol > 0.0 && tail_tol < 1.0) {
            return Err(Error::Config(format!(
                "tail tolerance must lie in (0,1), got {tail_tol}"
            )));
        }
        if !(u_min > 0.0) {
            return Err(Error::Config(format!("minimum effort must be positive, got {u_min}")));
        }
        let horizon = ((1.0 / tail_tol).ln() / u_min).ceil();
        Self::covering(step, horizon)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.step * i as f64
    }

    /// Interval containing `t`: returns `(i, frac)` with `t = t_i + frac * step`,
    /// `frac` in `[0, 1]`. Times outside `[0, T]` are clamped.
    #[inline]
    pub fn locate(&self, t: f64) -> (usize, f64) {
        if t <= 0.0 {
            return (0, 0.0);
        }
        let x = t / self.step;
        let i = x.floor() as usize;
        if i >= self.n_steps {
            return (self.n_steps - 1, 1.0);
        }
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    /// Index of the first node `t_i >= t` (may be `n_nodes()` if `t > T`).
    pub fn first_node_at_or_after(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let mut i = (t / self.step).ceil() as usize;
        while i > 0 && self.time(i - 1) >= t {
            i -= 1;
        }
        while i <= self.n_steps && self.time(i) < t {
            i += 1;
        }
        i.min(self.n_nodes())
    }
}

/// A trajectory sampled at every node of a [`TimeGrid`].
///
/// Each node carries `width` values: 1 for scalars, `K` for vectors and
/// `K*K` (row-major) for matrices. Values between nodes are linear
/// interpolations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    width: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, width: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 {
            return Err(Error::Config("grid function width must be positive".into()));
        }
        if values.len() != grid.n_nodes() * width {
            return Err(Error::GridMismatch(format!(
                "expected {} values ({} nodes x {width}), got {}",
                grid.n_nodes() * width,
                grid.n_nodes(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "grid function",
                time: grid.time(pos / width),
            });
        }
        Ok(Self { grid, width, values })
    }

    pub fn scalar(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn zeros(grid: TimeGrid, width: usize) -> Self {
        Self {
            grid,
            width,
            values: vec![0.0; grid.n_nodes() * width],
        }
    }

    /// Samples `f(t, out)` at every node.
    pub fn from_fn(grid: TimeGrid, width: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut out = Self::zeros(grid, width);
        for i in 0..grid.n_nodes() {
            let t = grid.time(i);
            f(t, out.node_mut(i));
        }
        out
    }

    pub(crate) fn from_raw(grid: TimeGrid, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes() * width);
        Self { grid, width, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.width..(i + 1) * self.width]
    }

    /// Scalar value at node `i` (component 0).
    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.values[i * self.width]
    }

    /// Iterator over component `c` across all nodes.
    pub fn component(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(c).step_by(self.width).copied()
    }

    /// Linear interpolation of all components at time `t`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let (i, frac) = self.grid.locate(t);
        let a = self.node(i);
        let b = self.node(i + 1);
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = x + frac * (y - x);
        }
    }

    /// Linear interpolation of component `c` at time `t`.
    #[inline]
    pub fn interpolate_component(&self, t: f64, c: usize) -> f64 {
        let (i, frac) = self.grid.locate(t);
        let x = self.values[i * self.width + c];
        let y = self.values[(i + 1) * self.width + c];
        x + frac * (y - x)
    }

    /// `sup` over nodes and components of `|self - other|`.
    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "grid functions differ in shape");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted distance `sup_t e^{-alpha t} |self_c(t) - other_c(t)|` per component.
    pub fn weighted_distance(&self, other: &GridFunction, alpha: f64) -> Vec<f64> {
        assert_eq!(self.values.len(), other.values.len(), "grid functions differ in shape");
        let mut out = vec![0.0_f64; self.width];
        for i in 0..self.n_nodes() {
            let w = (-alpha * self.grid.time(i)).exp();
            for (c, d) in out.iter_mut().enumerate() {
                let diff = (self.node(i)[c] - other.node(i)[c]).abs() * w;
                *d = d.max(diff);
            }
        }
        out
    }

    /// Affine combination `a * self + b * other`, node by node.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> GridFunction {
        assert_eq!(self.values.len(), other.values.len(), "grid functions differ in shape");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        GridFunction::from_raw(self.grid, self.width, values)
    }
}

/// Aggregate progress `rho`: fraction of the population that has arrived.
///
/// Members of the feasible set satisfy `rho(0) = 0`, `rho <= 1` and
/// `0 <= rho(t_{i+1}) - rho(t_i) <= u_max * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateProgress(GridFunction);

impl AggregateProgress {
    /// Wraps a scalar trajectory after checking `rho(0) = 0`, monotonicity and
    /// `rho <= 1` with slack `1e-12`. The rate bound needs the model's maximal
    /// effort; see [`AggregateProgress::violations`].
    pub fn new(values: GridFunction) -> Result<Self> {
        if values.width() != 1 {
            return Err(Error::Domain("aggregate progress must be scalar".into()));
        }
        let rho = Self(values);
        let issues = rho.violations(f64::INFINITY, 1e-12);
        if issues.is_empty() {
            Ok(rho)
        } else {
            Err(Error::Domain(issues.join("; ")))
        }
    }

    pub(crate) fn from_trusted(values: GridFunction) -> Self {
        debug_assert_eq!(values.width(), 1);
        Self(values)
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self(GridFunction::zeros(grid, 1))
    }

    /// Feasible-set violations with absolute slack `tol`.
    pub fn violations(&self, u_max: f64, tol: f64) -> Vec<String> {
        let f = &self.0;
        let h = f.grid().step();
        let mut out = Vec::new();
        if f.at(0).abs() > tol {
            out.push(format!("rho(0) = {} != 0", f.at(0)));
        }
        for i in 0..f.n_nodes() {
            let v = f.at(i);
            if v > 1.0 + tol {
                out.push(format!("rho({}) = {v} > 1", f.grid().time(i)));
                break;
            }
        }
        for i in 0..f.grid().n_steps() {
            let inc = f.at(i + 1) - f.at(i);
            if inc < -tol {
                out.push(format!("rho decreases at t = {}", f.grid().time(i)));
                break;
            }
            if inc > u_max * h + tol {
                out.push(format!(
                    "rho increment {inc} exceeds u_max*h at t = {}",
                    f.grid().time(i)
                ));
                break;
            }
        }
        out
    }

    pub fn is_member(&self, u_max: f64, tol: f64) -> bool {
        self.violations(u_max, tol).is_empty()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.0.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.0.at(i)
    }

    pub fn as_grid_function(&self) -> &GridFunction {
        &self.0
    }

    pub fn into_inner(self) -> GridFunction {
        self.0
    }

    pub fn sup_distance(&self, other: &AggregateProgress) -> f64 {
        self.0.sup_distance(&other.0)
    }
}

/// Projects a scalar trajectory onto the feasible set: starts at 0, then
/// follows `f` with each increment clipped to `[0, u_max * h]` and values
/// capped at 1. Members of the set are returned bit-for-bit unchanged.
pub fn project_to_d(f: &GridFunction, u_max: f64) -> AggregateProgress {
    assert_eq!(f.width(), 1, "project_to_d expects a scalar trajectory");
    let grid = *f.grid();
    let max_inc = u_max * grid.step();
    let mut out = Vec::with_capacity(grid.n_nodes());
    let mut prev = 0.0_f64;
    out.push(prev);
    for i in 1..grid.n_nodes() {
        let upper = (prev + max_inc).min(1.0);
        let lower = prev.min(upper);
        let next = f.at(i).clamp(lower, upper);
        out.push(next);
        prev = next;
    }
    AggregateProgress(GridFunction::from_raw(grid, 1, out))
}
