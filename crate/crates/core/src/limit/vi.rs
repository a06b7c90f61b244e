//! Obstacle scheme for the unregularized HJB variational inequality
//!
//! ```text
//! min( -V_k' - u_k (R(rho) - V_k) + c_k,  V_k - max_{j != k} (V_j - g_kj) ) = 0.
//! ```

use crate::error::{Error, Result};
use crate::grid::{AggregateProgress, GridFunction, TimeGrid};
use crate::hjb::ValueFunction;
use crate::model::ModelSpec;

/// `max_{j != k} (V_j - g_kj)` and the smallest index attaining it.
#[inline]
pub fn obstacle(spec: &ModelSpec, v: &[f64], k: usize) -> (f64, Option<usize>) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for (j, &vj) in v.iter().enumerate() {
        if j == k {
            continue;
        }
        let x = vj - spec.switching_cost(k, j);
        if x > best {
            best = x;
            arg = Some(j);
        }
    }
    (best, arg)
}

/// Regime an optimal pure strategy in `k` jumps to, when the obstacle binds
/// (`V_k = V_j - g_kj`). Ties go to the smallest index.
pub fn switch_target(spec: &ModelSpec, v: &[f64], k: usize) -> Option<usize> {
    let (best, arg) = obstacle(spec, v, k);
    if v[k] <= best {
        arg
    } else {
        None
    }
}

/// One simultaneous projection pass. A single pass is a fixed point when the
/// switching costs satisfy the strict triangle inequality.
fn project(spec: &ModelSpec, v: &mut [f64], scratch: &mut [f64]) {
    scratch.copy_from_slice(v);
    for k in 0..v.len() {
        let (best, _) = obstacle(spec, scratch, k);
        if best > v[k] {
            v[k] = best;
        }
    }
}

/// Backward explicit Euler with obstacle projection, started from the
/// no-switch stationary value `R(1) - c_k / u_k`. Requires `h < 1 / u_max`.
pub fn solve_hjbvi(spec: &ModelSpec, rho: &AggregateProgress, grid: &TimeGrid) -> Result<ValueFunction> {
    if rho.grid() != grid {
        return Err(Error::GridMismatch("progress and solver grids differ".into()));
    }
    let h = grid.step();
    if h * spec.u_max() >= 1.0 {
        return Err(Error::Config(format!(
            "obstacle scheme needs h < 1/u_max = {}, got h = {h}",
            1.0 / spec.u_max()
        )));
    }
    let k = spec.regimes();
    let n = grid.n_steps();
    let r1 = spec.reward.value(1.0);
    let mut v: Vec<f64> = (0..k).map(|a| r1 - spec.costs[a] / spec.efforts[a]).collect();
    let mut scratch = vec![0.0; k];
    project(spec, &mut v, &mut scratch);
    let mut values = vec![0.0; grid.n_nodes() * k];
    values[n * k..].copy_from_slice(&v);
    for i in (0..n).rev() {
        let r = spec.reward.value(rho.at(i + 1));
        for a in 0..k {
            v[a] += h * (spec.efforts[a] * (r - v[a]) - spec.costs[a]);
        }
        project(spec, &mut v, &mut scratch);
        values[i * k..(i + 1) * k].copy_from_slice(&v);
    }
    Ok(ValueFunction {
        values: GridFunction::from_raw(*grid, k, values),
        eta: 0.0,
    })
}

/// Both branches of the variational inequality at every node.
#[derive(Debug, Clone)]
pub struct ViscosityResidual {
    /// `-V_k' - u_k (R(rho) - V_k) + c_k`, derivative by centered differences
    /// (one-sided at the ends).
    pub ode_branch: GridFunction,
    /// `V_k - max_{j != k} (V_j - g_kj)`.
    pub obstacle_branch: GridFunction,
    /// `|min(ode, obstacle)|` per node and regime.
    pub min_branch: GridFunction,
    pub sup_min_branch: f64,
    pub min_obstacle: f64,
}

pub fn viscosity_residual(
    value: &ValueFunction,
    spec: &ModelSpec,
    rho: &AggregateProgress,
) -> Result<ViscosityResidual> {
    let grid = *value.grid();
    if rho.grid() != &grid {
        return Err(Error::GridMismatch("value and progress grids differ".into()));
    }
    let k = spec.regimes();
    let n = grid.n_steps();
    let h = grid.step();
    let v = &value.values;
    let mut ode = vec![0.0; grid.n_nodes() * k];
    let mut obs = vec![0.0; grid.n_nodes() * k];
    let mut res = vec![0.0; grid.n_nodes() * k];
    let mut sup = 0.0_f64;
    let mut min_obs = f64::INFINITY;
    for i in 0..grid.n_nodes() {
        let (lo, hi) = match i {
            0 => (0, 1),
            _ if i == n => (n - 1, n),
            _ => (i - 1, i + 1),
        };
        let dt = (hi - lo) as f64 * h;
        let r = spec.reward.value(rho.at(i));
        let node = v.node(i);
        for a in 0..k {
            let dv = (v.node(hi)[a] - v.node(lo)[a]) / dt;
            let o = -dv - spec.efforts[a] * (r - node[a]) + spec.costs[a];
            let b = if k > 1 {
                node[a] - obstacle(spec, node, a).0
            } else {
                f64::INFINITY
            };
            let m = o.min(b).abs();
            ode[i * k + a] = o;
            obs[i * k + a] = if b.is_finite() { b } else { 0.0 };
            res[i * k + a] = m;
            sup = sup.max(m);
            min_obs = min_obs.min(b);
        }
    }
    Ok(ViscosityResidual {
        ode_branch: GridFunction::from_raw(grid, k, ode),
        obstacle_branch: GridFunction::from_raw(grid, k, obs),
        min_branch: GridFunction::from_raw(grid, k, res),
        sup_min_branch: sup,
        min_obstacle: min_obs,
    })
}
