//! Pure switching strategies, their payoffs and the discounted value
//! evolution `Y_t`.

use crate::error::{Error, Result};
use crate::grid::{AggregateProgress, GridFunction};
use crate::hjb::ValueFunction;
use crate::model::ModelSpec;

/// Piecewise-constant regime path: regime `kappa[n]` on
/// `[sigma[n], sigma[n+1])`, with `sigma[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingPath {
    sigma: Vec<f64>,
    kappa: Vec<usize>,
}

impl SwitchingPath {
    pub fn new(sigma: Vec<f64>, kappa: Vec<usize>) -> Result<Self> {
        if sigma.is_empty() || sigma.len() != kappa.len() {
            return Err(Error::Path(
                "sigma and kappa must be non-empty and of equal length".into(),
            ));
        }
        if sigma[0] != 0.0 {
            return Err(Error::Path(format!("first switch time must be 0, got {}", sigma[0])));
        }
        for n in 1..sigma.len() {
            if !(sigma[n] > sigma[n - 1]) {
                return Err(Error::Path(format!("switch times not increasing at index {n}")));
            }
            if kappa[n] == kappa[n - 1] {
                return Err(Error::Path(format!("repeated regime at index {n}")));
            }
        }
        Ok(Self { sigma, kappa })
    }

    pub fn constant(regime: usize) -> Self {
        Self {
            sigma: vec![0.0],
            kappa: vec![regime],
        }
    }

    pub(crate) fn from_trusted(sigma: Vec<f64>, kappa: Vec<usize>) -> Self {
        Self { sigma, kappa }
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn kappa(&self) -> &[usize] {
        &self.kappa
    }

    pub fn switches(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn initial_regime(&self) -> usize {
        self.kappa[0]
    }

    /// Regime in force at `t` (right-continuous).
    pub fn regime_at(&self, t: f64) -> usize {
        let n = self.sigma.partition_point(|&s| s <= t);
        self.kappa[n.saturating_sub(1)]
    }

    fn check(&self, spec: &ModelSpec, horizon: f64) -> Result<()> {
        if let Some(&k) = self.kappa.iter().find(|&&k| k >= spec.regimes()) {
            return Err(Error::Path(format!("regime index {k} out of range")));
        }
        if self.sigma[self.sigma.len() - 1] >= horizon && self.switches() > 0 {
            return Err(Error::Path("last switch must precede the horizon".into()));
        }
        Ok(())
    }
}

/// Walks the union of grid nodes and switch times, calling `on_node` at every
/// grid node with the regime in force, the discount `exp(-int theta)` and the
/// accumulated running payoff minus discounted switching costs.
fn walk(
    path: &SwitchingPath,
    rho: &AggregateProgress,
    spec: &ModelSpec,
    mut on_node: impl FnMut(usize, usize, f64, f64),
) -> Result<()> {
    let grid = rho.grid();
    path.check(spec, grid.horizon())?;
    let rho_f = rho.as_grid_function();
    let run = |k: usize, r: f64| spec.efforts[k] * spec.reward.value(r) - spec.costs[k];
    let step_factor: Vec<f64> = spec.efforts.iter().map(|u| (-u * grid.step()).exp()).collect();

    let (sigma, kappa) = (path.sigma(), path.kappa());
    let mut k = kappa[0];
    let mut d = 1.0;
    let mut acc = 0.0;
    let mut t = 0.0;
    let mut f = run(k, rho.at(0));
    let mut next = 1;
    on_node(0, k, d, acc);
    for i in 0..grid.n_steps() {
        let t_end = grid.time(i + 1);
        let mut split = false;
        while next < sigma.len() && sigma[next] <= t_end {
            let s = sigma[next];
            let dt = s - t;
            if dt > 0.0 {
                let ds = d * (-spec.efforts[k] * dt).exp();
                let fs = run(k, rho_f.interpolate_component(s, 0));
                acc += 0.5 * dt * (d * f + ds * fs);
                d = ds;
                t = s;
            }
            acc -= d * spec.switching_cost(k, kappa[next]);
            k = kappa[next];
            f = run(k, rho_f.interpolate_component(s, 0));
            next += 1;
            split = true;
        }
        let dt = t_end - t;
        let factor = if split {
            (-spec.efforts[k] * dt).exp()
        } else {
            step_factor[k]
        };
        let de = d * factor;
        let fe = run(k, rho.at(i + 1));
        acc += 0.5 * dt * (d * f + de * fe);
        d = de;
        f = fe;
        t = t_end;
        on_node(i + 1, k, d, acc);
    }
    Ok(())
}

/// Payoff of a pure strategy against `rho`:
/// `int e^{-int theta} (theta R(rho) - c(theta)) - sum_n e^{-int_0^{sigma_n} theta} g`,
/// truncated at the horizon (see [`path_tail_bound`]).
pub fn pure_payoff(path: &SwitchingPath, rho: &AggregateProgress, spec: &ModelSpec) -> Result<f64> {
    let mut out = 0.0;
    walk(path, rho, spec, |_, _, _, acc| out = acc)?;
    Ok(out)
}

/// Bound on the payoff accrued after the horizon `T`.
pub fn path_tail_bound(spec: &ModelSpec, horizon: f64) -> f64 {
    let u = spec.u_min();
    (-u * horizon).exp() * (spec.reward.value(0.0) + spec.max_cost() / u)
}

/// `Y_t` along a path, with monotonicity diagnostics.
#[derive(Debug, Clone)]
pub struct YTrace {
    pub values: GridFunction,
    /// Largest single-step increase.
    pub max_increment: f64,
    /// `max_t (Y_t - min_{s <= t} Y_s)`: how far `Y` climbs back above a
    /// previous low.
    pub max_rise: f64,
}

impl YTrace {
    /// `sup_t |Y_t - target|`.
    pub fn sup_deviation(&self, target: f64) -> f64 {
        self.values
            .values()
            .iter()
            .map(|y| (y - target).abs())
            .fold(0.0, f64::max)
    }
}

/// `Y_t = V_{theta(t)}(t) e^{-int_0^t theta} + int_0^t e^{-int theta}(theta R - c) - sum_{sigma_n <= t} e^{-int_0^{sigma_n} theta} g`
/// at every grid node.
pub fn y_functional(
    path: &SwitchingPath,
    value: &ValueFunction,
    rho: &AggregateProgress,
    spec: &ModelSpec,
) -> Result<YTrace> {
    let grid = *rho.grid();
    if value.grid() != &grid {
        return Err(Error::GridMismatch("value and progress grids differ".into()));
    }
    let mut ys = vec![0.0; grid.n_nodes()];
    walk(path, rho, spec, |i, k, d, acc| {
        ys[i] = value.values.node(i)[k] * d + acc;
    })?;
    let mut max_increment = f64::NEG_INFINITY;
    let mut max_rise = 0.0_f64;
    let mut low = ys[0];
    for w in ys.windows(2) {
        max_increment = max_increment.max(w[1] - w[0]);
        low = low.min(w[1]);
        max_rise = max_rise.max(w[1] - low);
    }
    Ok(YTrace {
        values: GridFunction::from_raw(grid, 1, ys),
        max_increment: max_increment.max(0.0),
        max_rise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::RewardScheme;

    fn single(u: f64, c: f64) -> ModelSpec {
        ModelSpec::new(
            vec![u],
            vec![c],
            vec![vec![0.0]],
            RewardScheme::Linear { a: 1.0, b: 1.0 },
        )
        .unwrap()
    }

    fn exp_rho(grid: TimeGrid, u: f64) -> AggregateProgress {
        AggregateProgress::new(GridFunction::from_fn(grid, 1, |t, o| o[0] = 1.0 - (-u * t).exp())).unwrap()
    }

    #[test]
    fn path_validation() {
        assert!(SwitchingPath::new(vec![0.0, 1.0], vec![0, 1]).is_ok());
        assert!(matches!(
            SwitchingPath::new(vec![0.0, 1.0, 1.0], vec![0, 1, 0]),
            Err(Error::Path(_))
        ));
        assert!(matches!(
            SwitchingPath::new(vec![0.0, 1.0], vec![0, 0]),
            Err(Error::Path(_))
        ));
        assert!(matches!(SwitchingPath::new(vec![0.5], vec![0]), Err(Error::Path(_))));
        let p = SwitchingPath::new(vec![0.0, 1.0, 2.5], vec![0, 2, 1]).unwrap();
        assert_eq!(p.regime_at(0.0), 0);
        assert_eq!(p.regime_at(1.0), 2);
        assert_eq!(p.regime_at(3.0), 1);
    }

    #[test]
    fn constant_path_closed_forms() {
        for &u in &[1.0, 2.0] {
            let grid = TimeGrid::with_tail_tolerance(1e-3, 1e-8, u).unwrap();
            let j = pure_payoff(&SwitchingPath::constant(0), &exp_rho(grid, u), &single(u, 0.0)).unwrap();
            assert!((j - 0.5).abs() < 1e-4, "u={u}: {j}");
        }
        let grid = TimeGrid::with_tail_tolerance(1e-3, 1e-8, 1.0).unwrap();
        let j = pure_payoff(&SwitchingPath::constant(0), &exp_rho(grid, 1.0), &single(1.0, 0.1)).unwrap();
        assert!((j - 0.4).abs() < 1e-4);
    }

    #[test]
    fn switch_cost_is_discounted() {
        let grid = TimeGrid::new(1e-2, 2000).unwrap();
        let spec = ModelSpec::new(
            vec![1.0, 2.0],
            vec![0.0, 0.1],
            vec![vec![0.0, 0.3], vec![0.3, 0.0]],
            RewardScheme::Linear { a: 1.0, b: 1.0 },
        )
        .unwrap();
        let rho = exp_rho(grid, 1.0);
        let s = 1.234;
        let with = pure_payoff(&SwitchingPath::new(vec![0.0, s], vec![0, 1]).unwrap(), &rho, &spec).unwrap();
        let free = {
            let mut z = spec.clone();
            z.switching_costs = vec![0.0, 1e-300, 1e-300, 0.0];
            pure_payoff(&SwitchingPath::new(vec![0.0, s], vec![0, 1]).unwrap(), &rho, &z).unwrap()
        };
        assert!((free - with - (-s).exp() * 0.3).abs() < 1e-14);
    }

    #[test]
    fn last_switch_must_precede_horizon() {
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let spec = ModelSpec::new(
            vec![1.0, 2.0],
            vec![0.0, 0.0],
            vec![vec![0.0, 0.3], vec![0.3, 0.0]],
            RewardScheme::Linear { a: 1.0, b: 1.0 },
        )
        .unwrap();
        let p = SwitchingPath::new(vec![0.0, 1.0], vec![0, 1]).unwrap();
        assert!(matches!(
            pure_payoff(&p, &AggregateProgress::zero(grid), &spec),
            Err(Error::Path(_))
        ));
    }

    #[test]
    fn y_starts_at_value() {
        let grid = TimeGrid::new(1e-2, 1000).unwrap();
        let spec = single(1.0, 0.0);
        let v = ValueFunction {
            values: GridFunction::from_fn(grid, 1, |t, o| o[0] = 0.5 * (-t).exp()),
            eta: 0.0,
        };
        let y = y_functional(&SwitchingPath::constant(0), &v, &exp_rho(grid, 1.0), &spec).unwrap();
        assert_eq!(y.values.at(0), 0.5);
        // exact value function: Y is constant up to quadrature error
        assert!(y.sup_deviation(0.5) < 1e-4);
    }
}
