//! Fictitious play for the regularized mean-field equilibrium.
//!
//! Each iteration solves the HJB system against the current aggregate
//! `rho^(n)`, propagates the Gibbs best response forward, and folds the
//! resulting occupancy and flux into Cesàro averages:
//!
//! ```text
//! m^(n+1) = m_hat^(n) / (n+1) + n m^(n) / (n+1),   rho^(n+1) = 1 - sum_k m_k^(n+1)
//! ```
//!
//! Progress is measured by the exploitability
//! `E_n = J(m_hat^(n), w_hat^(n); rho^(n)) - J(m^(n), w^(n); rho^(n))`.

use crate::error::{Error, Result};
use crate::grid::{project_to_d, AggregateProgress, GridFunction, TimeGrid};
use crate::hjb::{gibbs_policy, solve_hjb_backward, Policy, ValueFunction};
use crate::kolmogorov::{aggregate_progress, consistency_rho, solve_forward, OccupationFlux};
use crate::model::ModelSpec;

/// Iterations of non-decreasing exploitability that trigger a warning.
pub const DIVERGENCE_WINDOW: usize = 50;

/// Starting aggregate for fictitious play.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    /// Everyone in the slowest regime: `rho = 1 - exp(-u_min t)`.
    #[default]
    SlowestRegime,
    /// `rho = 0`.
    Zero,
    /// Fastest feasible ramp `rho = min(u_max t, 1)`.
    MaxRamp,
    Custom(AggregateProgress),
}

impl InitialGuess {
    pub fn build(&self, spec: &ModelSpec, grid: &TimeGrid) -> Result<AggregateProgress> {
        match self {
            InitialGuess::SlowestRegime => {
                let u = spec.u_min();
                consistency_rho(&GridFunction::from_fn(*grid, 1, |_, o| o[0] = u), spec)
            }
            InitialGuess::Zero => Ok(project_to_d(&GridFunction::zeros(*grid, 1), spec.u_max())),
            InitialGuess::MaxRamp => {
                let u = spec.u_max();
                Ok(project_to_d(
                    &GridFunction::from_fn(*grid, 1, |t, o| o[0] = (u * t).min(1.0)),
                    u,
                ))
            }
            InitialGuess::Custom(rho) => {
                if rho.grid() != grid {
                    return Err(Error::GridMismatch("initial guess is on a different grid".into()));
                }
                Ok(rho.clone())
            }
        }
    }
}

/// Stopping and iteration controls. `tol_exploit = None` means
/// `1e-6 (1 + |J|)`; a tolerance of `0` disables that criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct FpParams {
    pub max_iters: usize,
    pub tol_exploit: Option<f64>,
    pub tol_rho: f64,
    pub initial: InitialGuess,
}

impl Default for FpParams {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_exploit: None,
            tol_rho: 1e-8,
            initial: InitialGuess::SlowestRegime,
        }
    }
}

impl FpParams {
    /// Runs exactly `max_iters` iterations with both stopping criteria off.
    pub fn fixed(max_iters: usize) -> Self {
        Self {
            max_iters,
            tol_exploit: Some(0.0),
            tol_rho: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub n: usize,
    pub exploitability: f64,
    /// `sup_t |rho^(n) - rho^(n-1)|`.
    pub sup_change: f64,
    /// `J(m^(n), w^(n); rho^(n))`.
    pub payoff: f64,
}

/// Fictitious-play iterate. `average` is `None` before the first step, when
/// `rho` is the initial guess rather than the aggregate of an occupancy.
#[derive(Debug, Clone)]
pub struct FpState {
    pub n: usize,
    pub average: Option<OccupationFlux>,
    pub rho: AggregateProgress,
    pub last_change: f64,
    pub history: Vec<IterationRecord>,
}

impl FpState {
    pub fn new(rho: AggregateProgress) -> Self {
        Self {
            n: 0,
            average: None,
            rho,
            last_change: f64::NAN,
            history: Vec::new(),
        }
    }
}

/// Best response to `rho^(n)` together with its exploitability.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: ValueFunction,
    pub policy: Policy,
    pub best: OccupationFlux,
    pub best_payoff: f64,
    pub record: Option<IterationRecord>,
}

#[inline]
fn entropy_term(w: f64, m: f64) -> Result<f64> {
    if w == 0.0 {
        return Ok(0.0);
    }
    if m <= 0.0 {
        return Err(Error::Domain("positive flux out of an empty regime".into()));
    }
    // log-space ratio survives underflow of tiny masses
    Ok(w * (w.ln() - m.ln()) - w)
}

#[inline]
fn x_log_x(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Regularized payoff `J(m, w; rho)` by composite trapezoid quadrature on the
/// shared grid, with `0 log 0 = 0` in both entropy terms.
pub fn payoff_j(flux: &OccupationFlux, rho: &AggregateProgress, spec: &ModelSpec, eta: f64) -> Result<f64> {
    let grid = flux.grid();
    if rho.grid() != grid {
        return Err(Error::GridMismatch("flux and progress grids differ".into()));
    }
    let k = spec.regimes();
    if flux.regimes() != k {
        return Err(Error::Config(format!("flux does not have {k} regimes")));
    }
    let integrand = |i: usize| -> Result<f64> {
        let m = flux.mass.node(i);
        let w = flux.flux.node(i);
        let r = spec.reward.value(rho.at(i));
        let mut s = 0.0;
        for a in 0..k {
            s += (r * spec.efforts[a] - spec.costs[a]) * m[a];
            for b in 0..k {
                if a != b {
                    let x = w[a * k + b];
                    s -= x * spec.switching_cost(a, b) + eta * entropy_term(x, m[a])?;
                }
            }
        }
        Ok(s)
    };
    let h = grid.step();
    let n = grid.n_steps();
    let mut total = 0.5 * (integrand(0)? + integrand(n)?);
    for i in 1..n {
        total += integrand(i)?;
    }
    let initial: f64 = flux.mass.node(0).iter().map(|&p| x_log_x(p)).sum();
    Ok(h * total - eta * initial)
}

/// `J(best; rho) - J(average; rho)`.
pub fn exploitability(state: &FpState, best: &OccupationFlux, spec: &ModelSpec, eta: f64) -> Result<f64> {
    let avg = state
        .average
        .as_ref()
        .ok_or_else(|| Error::Config("exploitability needs at least one fictitious-play step".into()))?;
    Ok(payoff_j(best, &state.rho, spec, eta)? - payoff_j(avg, &state.rho, spec, eta)?)
}

/// Best response to the current aggregate, and `E_n` when `n >= 1`.
pub fn evaluate(state: &FpState, spec: &ModelSpec, eta: f64) -> Result<Evaluation> {
    let grid = *state.rho.grid();
    let value = solve_hjb_backward(spec, eta, &state.rho, &grid)?;
    let policy = gibbs_policy(&value, spec, eta)?;
    let best = solve_forward(spec, &policy, &grid)?;
    let best_payoff = payoff_j(&best, &state.rho, spec, eta)?;
    let record = match &state.average {
        Some(avg) => {
            let payoff = payoff_j(avg, &state.rho, spec, eta)?;
            Some(IterationRecord {
                n: state.n,
                exploitability: best_payoff - payoff,
                sup_change: state.last_change,
                payoff,
            })
        }
        None => None,
    };
    Ok(Evaluation {
        value,
        policy,
        best,
        best_payoff,
        record,
    })
}

/// Folds a best response into the Cesàro average and advances `n`.
pub fn advance(mut state: FpState, best: &OccupationFlux) -> FpState {
    let n = state.n as f64;
    let avg = match state.average.take() {
        None => best.clone(),
        Some(avg) => avg.combine(n / (n + 1.0), best, 1.0 / (n + 1.0)),
    };
    let rho = aggregate_progress(&avg);
    state.last_change = rho.sup_distance(&state.rho);
    state.rho = rho;
    state.average = Some(avg);
    state.n += 1;
    state
}

/// One loop body: evaluate, record `E_n`, average.
pub fn fp_step(mut state: FpState, spec: &ModelSpec, eta: f64) -> Result<(FpState, Evaluation)> {
    let eval = evaluate(&state, spec, eta)?;
    if let Some(rec) = eval.record {
        state.history.push(rec);
    }
    let state = advance(state, &eval.best);
    Ok((state, eval))
}

/// Least-squares fit `E_n ~ C log(n+2)/(n+1)` through the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub constant: f64,
    /// `1 - SS_res / SS_tot` with `SS_tot` taken about the mean.
    pub r_squared: f64,
    /// `1 - SS_res / sum E_n^2`, the no-intercept convention.
    pub uncentered_r_squared: f64,
    /// Slope of `log E_n` against `log n` over the same points, when all
    /// `E_n > 0`.
    pub power_exponent: Option<f64>,
    pub points: usize,
}

/// Fits the tail half of `history`.
pub fn fit_rate(history: &[IterationRecord]) -> Option<RateFit> {
    let tail = &history[history.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let basis = |n: usize| ((n + 2) as f64).ln() / (n + 1) as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for r in tail {
        let x = basis(r.n);
        sxy += x * r.exploitability;
        sxx += x * x;
    }
    let c = sxy / sxx;
    let mean = tail.iter().map(|r| r.exploitability).sum::<f64>() / tail.len() as f64;
    let (mut ss_res, mut ss_tot, mut ss_raw) = (0.0, 0.0, 0.0);
    for r in tail {
        ss_res += (r.exploitability - c * basis(r.n)).powi(2);
        ss_tot += (r.exploitability - mean).powi(2);
        ss_raw += r.exploitability.powi(2);
    }
    let ratio = |den: f64| if den > 0.0 { 1.0 - ss_res / den } else { 1.0 };
    let power_exponent = tail.iter().all(|r| r.exploitability > 0.0).then(|| {
        let xs: Vec<f64> = tail.iter().map(|r| (r.n as f64).ln()).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.exploitability.ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        num / den
    });
    Some(RateFit {
        constant: c,
        r_squared: ratio(ss_tot),
        uncentered_r_squared: ratio(ss_raw),
        power_exponent,
        points: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Exploitability,
    RhoChange,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct FpReport {
    pub stop: StopReason,
    pub iterations: usize,
    pub rate: Option<RateFit>,
    pub divergence_warning: bool,
    /// Bound on the payoff mass truncated beyond the horizon.
    pub tail_bound: f64,
    pub final_payoff: f64,
}

/// Equilibrium candidate: the final aggregate and the best response to it.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub eta: f64,
    pub rho: AggregateProgress,
    pub value: ValueFunction,
    pub policy: Policy,
    pub best: OccupationFlux,
    pub average: OccupationFlux,
}

fn non_decreasing_run(history: &[IterationRecord]) -> bool {
    let mut run = 0;
    for w in history.windows(2) {
        if w[1].exploitability >= w[0].exploitability {
            run += 1;
            if run >= DIVERGENCE_WINDOW {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// Runs fictitious play on `grid` until a stopping rule fires or `n`
/// reaches `max_iters`. The best response to the final aggregate is
/// returned as the equilibrium policy.
pub fn run_fp(
    spec: &ModelSpec,
    eta: f64,
    grid: &TimeGrid,
    params: &FpParams,
) -> Result<(FpState, FpReport, Equilibrium)> {
    run_fp_with(spec, eta, grid, params, |_, _| {})
}

/// As [`run_fp`], calling `observe` with the state and its best response
/// after every evaluation.
pub fn run_fp_with(
    spec: &ModelSpec,
    eta: f64,
    grid: &TimeGrid,
    params: &FpParams,
    mut observe: impl FnMut(&FpState, &Evaluation),
) -> Result<(FpState, FpReport, Equilibrium)> {
    if params.max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    let mut state = FpState::new(params.initial.build(spec, grid)?);
    loop {
        let eval = evaluate(&state, spec, eta)?;
        let mut stop = None;
        if let Some(rec) = eval.record {
            state.history.push(rec);
            let tol = params.tol_exploit.unwrap_or(1e-6 * (1.0 + rec.payoff.abs()));
            if tol > 0.0 && rec.exploitability <= tol {
                stop = Some(StopReason::Exploitability);
            } else if params.tol_rho > 0.0 && rec.sup_change <= params.tol_rho {
                stop = Some(StopReason::RhoChange);
            } else if state.n >= params.max_iters {
                stop = Some(StopReason::MaxIterations);
            }
        }
        observe(&state, &eval);
        if let Some(stop) = stop {
            let u_min = spec.u_min();
            let tail_bound = (-u_min * grid.horizon()).exp() * (spec.reward.value(0.0) + spec.max_cost() / u_min);
            let report = FpReport {
                stop,
                iterations: state.n,
                rate: fit_rate(&state.history),
                divergence_warning: non_decreasing_run(&state.history),
                tail_bound,
                final_payoff: state.history.last().map_or(f64::NAN, |r| r.payoff),
            };
            let equilibrium = Equilibrium {
                eta,
                rho: state.rho.clone(),
                value: eval.value,
                policy: eval.policy,
                best: eval.best,
                average: state.average.clone().expect("average exists after a step"),
            };
            return Ok((state, report, equilibrium));
        }
        state = advance(state, &eval.best);
    }
}
