//! Entropy-regularized HJB system and its Gibbs best response.
//!
//! For a given aggregate progress `rho`, the regularized value `V` solves the
//! backward system
//!
//! ```text
//! V_k' + u_k (R(rho) - V_k) - c_k + eta * sum_{j != k} exp((V_j - V_k - g_kj) / eta) = 0
//! ```
//!
//! whose unique bounded solution is approximated on `[0, T]` with the
//! stationary value at `rho = 1` as terminal condition. The optimal switching
//! rates are `pi_kj = exp((V_j - V_k - g_kj) / eta)` and the optimal initial
//! law is the softmax of `V(0) / eta`.

use crate::error::{Error, Result};
use crate::grid::{AggregateProgress, GridFunction, TimeGrid};
use crate::model::ModelSpec;
use crate::rk4::{Rk4, Stage};

/// Largest exponent accepted in a Gibbs rate before failing.
pub const MAX_EXPONENT: f64 = 700.0;

const STATIONARY_TOL: f64 = 1e-12;
const STATIONARY_MAX_ITERS: usize = 100_000;

/// Value function on the grid; `eta == 0` marks the unregularized
/// (variational inequality) solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: GridFunction,
    pub eta: f64,
}

impl ValueFunction {
    pub fn regimes(&self) -> usize {
        self.values.width()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.values.grid()
    }

    pub fn initial(&self) -> &[f64] {
        self.values.node(0)
    }

    /// `max_k V_k(0)`.
    pub fn best_initial_value(&self) -> f64 {
        self.initial().iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Randomized control: time-dependent generator plus initial law.
///
/// `rates` holds the full `K x K` generator per node: off-diagonal switching
/// rates and the diagonal `-sum_{j != k} pi_kj`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub rates: GridFunction,
    pub initial: Vec<f64>,
}

impl Policy {
    pub fn regimes(&self) -> usize {
        self.initial.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.rates.grid()
    }

    #[inline]
    pub fn rate(&self, node: usize, from: usize, to: usize) -> f64 {
        self.rates.node(node)[from * self.regimes() + to]
    }

    /// Largest off-diagonal rate over all nodes.
    pub fn max_rate(&self) -> f64 {
        let k = self.regimes();
        let mut best = 0.0_f64;
        for i in 0..self.rates.n_nodes() {
            let node = self.rates.node(i);
            for a in 0..k {
                for b in 0..k {
                    if a != b {
                        best = best.max(node[a * k + b]);
                    }
                }
            }
        }
        best
    }

    /// Time-homogeneous policy with the given off-diagonal rates.
    pub fn constant(grid: TimeGrid, rates: &[Vec<f64>], initial: Vec<f64>) -> Result<Self> {
        let k = initial.len();
        if rates.len() != k || rates.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("rate matrix must be {k}x{k}")));
        }
        let mut node = vec![0.0; k * k];
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    if rates[a][b] < 0.0 {
                        return Err(Error::Domain("switching rates must be non-negative".into()));
                    }
                    node[a * k + b] = rates[a][b];
                }
            }
            complete_diagonal(&mut node[a * k..(a + 1) * k], a);
        }
        let values = GridFunction::from_fn(grid, k * k, |_, out| out.copy_from_slice(&node));
        Ok(Self { rates: values, initial })
    }
}

/// Sets `row[k] = -sum_{j != k} row[j]`, so the row sums to exactly zero when
/// summed off-diagonal first.
#[inline]
pub(crate) fn complete_diagonal(row: &mut [f64], k: usize) {
    row[k] = 0.0;
    let s: f64 = row.iter().sum();
    row[k] = -s;
}

/// Row sum of a generator row, off-diagonal terms first.
pub fn generator_row_sum(row: &[f64], k: usize) -> f64 {
    let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &x)| x).sum();
    off + row[k]
}

#[inline]
fn gibbs_exponent(spec: &ModelSpec, eta: f64, v: &[f64], from: usize, to: usize) -> f64 {
    (v[to] - v[from] - spec.switching_cost(from, to)) / eta
}

/// Right-hand side `u_k (R - V_k) - c_k + eta sum_j exp(...)`, i.e. `-dV_k/dt`.
/// On overflow returns `(from, to, exponent)`.
#[inline]
fn hjb_rate(
    spec: &ModelSpec,
    eta: f64,
    reward: f64,
    v: &[f64],
    out: &mut [f64],
) -> std::result::Result<(), (usize, usize, f64)> {
    let k = spec.regimes();
    for a in 0..k {
        let mut s = 0.0;
        for b in 0..k {
            if a == b {
                continue;
            }
            let x = gibbs_exponent(spec, eta, v, a, b);
            if x > MAX_EXPONENT || x.is_nan() {
                return Err((a, b, x));
            }
            s += x.exp();
        }
        out[a] = spec.efforts[a] * (reward - v[a]) - spec.costs[a] + eta * s;
    }
    Ok(())
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("entropy parameter must be positive, got {eta}")))
    }
}

/// Stationary value at `rho = 1`: solves
/// `0 = u_k (R(1) - V_k) - c_k + eta sum_{j != k} exp((V_j - V_k - g_kj)/eta)`.
///
/// Each sweep updates every component by its residual divided by the
/// residual's own-component slope `u_k + sum_j pi_kj` (a Jacobi-damped
/// fixed-point iteration). Stops when the residual is below `1e-12` relative
/// to the term scale.
pub fn stationary_value(spec: &ModelSpec, eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    let k = spec.regimes();
    let r1 = spec.reward.value(1.0);
    let mut v: Vec<f64> = (0..k).map(|a| r1 - spec.costs[a] / spec.efforts[a]).collect();
    let mut resid = vec![0.0; k];
    let mut slope = vec![0.0; k];
    let mut last = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITERS {
        let mut worst = 0.0_f64;
        let mut scale = 1.0_f64;
        for a in 0..k {
            let mut s = 0.0;
            for b in 0..k {
                if a == b {
                    continue;
                }
                let x = gibbs_exponent(spec, eta, &v, a, b);
                if x > MAX_EXPONENT || x.is_nan() {
                    return Err(Error::Overflow {
                        from: a,
                        to: b,
                        time: f64::INFINITY,
                        exponent: x,
                    });
                }
                s += x.exp();
            }
            let u = spec.efforts[a];
            resid[a] = u * (r1 - v[a]) - spec.costs[a] + eta * s;
            slope[a] = u + s;
            worst = worst.max(resid[a].abs());
            scale = scale.max((u * v[a]).abs()).max(eta * s);
        }
        last = worst;
        if worst <= STATIONARY_TOL * scale {
            return Ok(v);
        }
        for a in 0..k {
            v[a] += resid[a] / slope[a];
        }
    }
    Err(Error::NonConvergence {
        what: "stationary value iteration",
        iterations: STATIONARY_MAX_ITERS,
        residual: last,
    })
}

/// Regularized value function for the given progress, by RK4 backward from
/// the stationary terminal value.
pub fn solve_hjb_backward(
    spec: &ModelSpec,
    eta: f64,
    rho: &AggregateProgress,
    grid: &TimeGrid,
) -> Result<ValueFunction> {
    check_eta(eta)?;
    if rho.grid() != grid {
        return Err(Error::GridMismatch("progress and solver grids differ".into()));
    }
    let terminal = stationary_value(spec, eta)?;
    solve_hjb_with_terminal(spec, eta, rho, &terminal)
}

/// As [`solve_hjb_backward`] with an explicit terminal value `V(T)`.
pub fn solve_hjb_with_terminal(
    spec: &ModelSpec,
    eta: f64,
    rho: &AggregateProgress,
    terminal: &[f64],
) -> Result<ValueFunction> {
    check_eta(eta)?;
    let k = spec.regimes();
    if terminal.len() != k {
        return Err(Error::Config(format!(
            "terminal value has {} entries for {k} regimes",
            terminal.len()
        )));
    }
    let grid = *rho.grid();
    let n = grid.n_steps();
    let h = grid.step();
    let mut values = vec![0.0; grid.n_nodes() * k];
    values[n * k..].copy_from_slice(terminal);
    let mut v = terminal.to_vec();
    let mut rk = Rk4::new(k);
    let mut r_hi = spec.reward.value(rho.at(n));
    for i in (0..n).rev() {
        let r_lo = spec.reward.value(rho.at(i));
        let r_mid = spec.reward.value(0.5 * (rho.at(i) + rho.at(i + 1)));
        // integrate in reversed time: Start is t_{i+1}, End is t_i
        rk.step(&mut v, h, |stage, y, out| {
            let (r, t) = match stage {
                Stage::Start => (r_hi, grid.time(i + 1)),
                Stage::Mid => (r_mid, grid.time(i) + 0.5 * h),
                Stage::End => (r_lo, grid.time(i)),
            };
            hjb_rate(spec, eta, r, y, out).map_err(|(from, to, exponent)| Error::Overflow {
                from,
                to,
                time: t,
                exponent,
            })
        })?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "HJB backward integration",
                time: grid.time(i),
            });
        }
        values[i * k..(i + 1) * k].copy_from_slice(&v);
        r_hi = r_lo;
    }
    Ok(ValueFunction {
        values: GridFunction::from_raw(grid, k, values),
        eta,
    })
}

/// Gibbs switching rates `pi_kj = exp((V_j - V_k - g_kj)/eta)` at every node,
/// with the diagonal completing each row to zero.
pub fn best_response_generator(value: &ValueFunction, spec: &ModelSpec, eta: f64) -> Result<GridFunction> {
    check_eta(eta)?;
    let k = spec.regimes();
    let grid = *value.grid();
    let mut out = vec![0.0; grid.n_nodes() * k * k];
    for i in 0..grid.n_nodes() {
        let v = value.values.node(i);
        let node = &mut out[i * k * k..(i + 1) * k * k];
        for a in 0..k {
            let row = &mut node[a * k..(a + 1) * k];
            for b in 0..k {
                if a == b {
                    continue;
                }
                let x = gibbs_exponent(spec, eta, v, a, b);
                if x > MAX_EXPONENT || x.is_nan() {
                    return Err(Error::Overflow {
                        from: a,
                        to: b,
                        time: grid.time(i),
                        exponent: x,
                    });
                }
                row[b] = x.exp();
            }
            complete_diagonal(row, a);
        }
    }
    Ok(GridFunction::from_raw(grid, k * k, out))
}

/// Softmax of `v0 / eta`, computed after subtracting the maximum.
pub fn softmax_initial(v0: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    let max = v0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = v0.iter().map(|&v| ((v - max) / eta).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Gibbs generator plus softmax initial law.
pub fn gibbs_policy(value: &ValueFunction, spec: &ModelSpec, eta: f64) -> Result<Policy> {
    Ok(Policy {
        rates: best_response_generator(value, spec, eta)?,
        initial: softmax_initial(value.initial(), eta)?,
    })
}
