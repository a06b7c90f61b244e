//! Forward Kolmogorov equation for the population occupancy.
//!
//! Under a policy `(pi, Delta)` the mass `m_k(t)` of agents still racing in
//! regime `k` solves `m_k' = -u_k m_k + sum_j m_j pi_jk`, `m(0) = Delta`. The
//! arrived fraction is `rho = 1 - sum_k m_k`.

use crate::error::{Error, Result};
use crate::grid::{AggregateProgress, GridFunction, TimeGrid};
use crate::hjb::Policy;
use crate::model::ModelSpec;
use crate::rk4::{Rk4, Stage};

/// Negative mass tolerated before reporting an instability.
pub const POSITIVITY_SLACK: f64 = 1e-10;

/// Occupancy `m` (width `K`) and flux `w_kj = m_k pi_kj` (width `K*K`, zero
/// diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationFlux {
    pub mass: GridFunction,
    pub flux: GridFunction,
}

impl OccupationFlux {
    pub fn regimes(&self) -> usize {
        self.mass.width()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.mass.grid()
    }

    /// `sum_k m_k(t_i)`, summed in regime order.
    #[inline]
    pub fn total_mass(&self, i: usize) -> f64 {
        self.mass.node(i).iter().sum()
    }

    /// `a * self + b * other`, node by node.
    pub fn combine(&self, a: f64, other: &OccupationFlux, b: f64) -> OccupationFlux {
        OccupationFlux {
            mass: self.mass.combine(a, &other.mass, b),
            flux: self.flux.combine(a, &other.flux, b),
        }
    }
}

/// Integrates the forward equation by RK4 on `grid`. Rates between nodes are
/// linearly interpolated.
pub fn solve_forward(spec: &ModelSpec, policy: &Policy, grid: &TimeGrid) -> Result<OccupationFlux> {
    let k = spec.regimes();
    if policy.grid() != grid {
        return Err(Error::GridMismatch("policy and solver grids differ".into()));
    }
    if policy.regimes() != k || policy.rates.width() != k * k {
        return Err(Error::Config(format!("policy does not have {k} regimes")));
    }
    let total: f64 = policy.initial.iter().sum();
    if policy.initial.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain("initial law must lie on the simplex".into()));
    }
    let n = grid.n_steps();
    let h = grid.step();
    let mut mass = vec![0.0; grid.n_nodes() * k];
    mass[..k].copy_from_slice(&policy.initial);
    let mut m = policy.initial.clone();
    let mut mid = vec![0.0; k * k];
    let mut rk = Rk4::new(k);
    for i in 0..n {
        let lo = policy.rates.node(i);
        let hi = policy.rates.node(i + 1);
        for (x, (a, b)) in mid.iter_mut().zip(lo.iter().zip(hi)) {
            *x = 0.5 * (a + b);
        }
        rk.step::<()>(&mut m, h, |stage, y, out| {
            let pi: &[f64] = match stage {
                Stage::Start => lo,
                Stage::Mid => &mid,
                Stage::End => hi,
            };
            for (c, o) in out.iter_mut().enumerate() {
                let mut s = -spec.efforts[c] * y[c];
                for (j, &yj) in y.iter().enumerate() {
                    s += yj * pi[j * k + c];
                }
                *o = s;
            }
            Ok(())
        })
        .expect("forward rate is infallible");
        for (c, x) in m.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    what: "Kolmogorov forward integration",
                    time: grid.time(i + 1),
                });
            }
            if *x < -POSITIVITY_SLACK {
                return Err(Error::Instability {
                    regime: c,
                    time: grid.time(i + 1),
                    mass: *x,
                });
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        mass[(i + 1) * k..(i + 2) * k].copy_from_slice(&m);
    }

    let mut flux = vec![0.0; grid.n_nodes() * k * k];
    for i in 0..grid.n_nodes() {
        let pi = policy.rates.node(i);
        let mi = &mass[i * k..(i + 1) * k];
        let wi = &mut flux[i * k * k..(i + 1) * k * k];
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    wi[a * k + b] = mi[a] * pi[a * k + b];
                }
            }
        }
    }
    Ok(OccupationFlux {
        mass: GridFunction::from_raw(*grid, k, mass),
        flux: GridFunction::from_raw(*grid, k * k, flux),
    })
}

/// `rho(t_i) = 1 - sum_k m_k(t_i)` at every node.
pub fn aggregate_progress(flux: &OccupationFlux) -> AggregateProgress {
    let grid = *flux.grid();
    let values = (0..grid.n_nodes()).map(|i| 1.0 - flux.total_mass(i)).collect();
    AggregateProgress::from_trusted(GridFunction::from_raw(grid, 1, values))
}

/// Solves `rho' = theta_bar (1 - rho)`, `rho(0) = 0` by RK4 for an average
/// effort trajectory with values in `[u_min, u_max]`.
pub fn consistency_rho(theta_bar: &GridFunction, spec: &ModelSpec) -> Result<AggregateProgress> {
    if theta_bar.width() != 1 {
        return Err(Error::Domain("average effort must be scalar".into()));
    }
    let (lo, hi) = (spec.u_min(), spec.u_max());
    let slack = 1e-12 * hi;
    for i in 0..theta_bar.n_nodes() {
        let th = theta_bar.at(i);
        if th < lo - slack || th > hi + slack {
            return Err(Error::Domain(format!(
                "average effort {th} at t = {} outside [{lo}, {hi}]",
                theta_bar.grid().time(i)
            )));
        }
    }
    let grid = *theta_bar.grid();
    let h = grid.step();
    let mut out = Vec::with_capacity(grid.n_nodes());
    let mut rho = [0.0];
    out.push(0.0);
    let mut rk = Rk4::new(1);
    for i in 0..grid.n_steps() {
        let (a, b) = (theta_bar.at(i), theta_bar.at(i + 1));
        let m = 0.5 * (a + b);
        rk.step::<()>(&mut rho, h, |stage, y, o| {
            let th = match stage {
                Stage::Start => a,
                Stage::Mid => m,
                Stage::End => b,
            };
            o[0] = th * (1.0 - y[0]);
            Ok(())
        })
        .expect("consistency rate is infallible");
        out.push(rho[0]);
    }
    Ok(AggregateProgress::from_trusted(GridFunction::from_raw(grid, 1, out)))
}

/// Trapezoid quadrature of `int_0^t sum_k u_k m_k ds` at every node.
pub fn integrated_arrivals(spec: &ModelSpec, flux: &OccupationFlux) -> Vec<f64> {
    let grid = flux.grid();
    let h = grid.step();
    let rate = |i: usize| -> f64 { flux.mass.node(i).iter().zip(&spec.efforts).map(|(m, u)| m * u).sum() };
    let mut out = Vec::with_capacity(grid.n_nodes());
    let mut acc = 0.0;
    let mut prev = rate(0);
    out.push(0.0);
    for i in 1..grid.n_nodes() {
        let cur = rate(i);
        acc += 0.5 * h * (prev + cur);
        out.push(acc);
        prev = cur;
    }
    out
}
