//! Checks that the small-`eta` equilibrium approximates a relaxed
//! equilibrium of the unregularized game.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fictitious::{run_fp, Equilibrium, FpParams, FpReport};
use crate::grid::{GridFunction, TimeGrid};
use crate::hjb::ValueFunction;
use crate::kolmogorov::consistency_rho;
use crate::model::ModelSpec;
use crate::montecarlo::{agent_rng, PathSampler};

use super::paths::y_functional;
use super::vi::{solve_hjbvi, viscosity_residual};

const CHUNK: usize = 256;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub sample_count: usize,
    pub seed: u64,
    /// Support threshold; `None` means `10 h u_max r`.
    pub nu: Option<f64>,
    /// Allowed `sup_t |Y_t - max_k V_k(0)|` per path.
    pub y_tol: f64,
    /// Allowed rise of `Y` per path; `None` means `5 h`.
    pub rise_tol: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            sample_count: 10_000,
            seed: 0,
            nu: None,
            y_tol: 0.05,
            rise_tol: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub eta: f64,
    pub fp_iterations: usize,
    pub final_exploitability: f64,
    /// Obstacle-scheme `V(0)` at the equilibrium aggregate.
    pub vi_initial_value: Vec<f64>,
    pub regularized_initial_value: Vec<f64>,
    pub best_value: f64,
    pub vi_residual: f64,
    pub sample_count: usize,
    pub y_tol: f64,
    pub rise_tol: f64,
    pub fraction_within_y_tol: f64,
    pub fraction_non_increasing: f64,
    pub max_y_rise: f64,
    pub mean_y_deviation: f64,
    pub max_y_deviation: f64,
    pub mean_switches: f64,
    /// `sup_t |rho_theta - rho*|` where `rho_theta` solves the consistency
    /// equation with the sampled average effort.
    pub rho_gap_average_effort: f64,
    /// `sup_t |1 - mean(exp(-int theta)) - rho*|` over the sampled paths.
    pub rho_gap_survival: f64,
    pub nu: f64,
    /// 1-based regimes within `nu` of the best initial value.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub report: VerificationReport,
    pub fp: FpReport,
    pub equilibrium: Equilibrium,
    pub vi: ValueFunction,
}

struct PathStats {
    within: usize,
    non_increasing: usize,
    max_rise: f64,
    dev_sum: f64,
    dev_max: f64,
    switches: usize,
    effort: Vec<f64>,
    survival: Vec<f64>,
}

/// Regimes whose initial value is within `nu` of the best, 1-based.
pub fn support_set(v0: &[f64], nu: f64) -> Vec<usize> {
    let best = v0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v0.iter()
        .enumerate()
        .filter(|&(_, &v)| v >= best - nu)
        .map(|(k, _)| k + 1)
        .collect()
}

/// Solves the regularized equilibrium at `eta`, the obstacle problem at its
/// aggregate, samples paths from the equilibrium chain and reports the `Y`
/// statistics, the consistency gap of the sampled effort and the support set.
pub fn verify_relaxed_equilibrium(
    spec: &ModelSpec,
    eta: f64,
    grid: &TimeGrid,
    params: &FpParams,
    options: &VerifyOptions,
) -> Result<Verification> {
    if options.sample_count == 0 {
        return Err(Error::Config("sample_count must be at least 1".into()));
    }
    let (state, fp, equilibrium) = run_fp(spec, eta, grid, params)?;
    let rho = &equilibrium.rho;
    let vi = solve_hjbvi(spec, rho, grid)?;
    let residual = viscosity_residual(&vi, spec, rho)?;
    let best_value = vi.best_initial_value();
    let h = grid.step();
    let rise_tol = options.rise_tol.unwrap_or(5.0 * h);
    let nu = options.nu.unwrap_or(10.0 * h * spec.u_max() * spec.reward.lipschitz());
    let nn = grid.n_nodes();
    let sampler = PathSampler::new(&equilibrium.policy);

    let chunks = options.sample_count.div_ceil(CHUNK);
    let parts: Vec<Result<PathStats>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = PathStats {
                within: 0,
                non_increasing: 0,
                max_rise: 0.0,
                dev_sum: 0.0,
                dev_max: 0.0,
                switches: 0,
                effort: vec![0.0; nn],
                survival: vec![0.0; nn],
            };
            let lo = c * CHUNK;
            for i in lo..(lo + CHUNK).min(options.sample_count) {
                let mut rng = agent_rng(options.seed, i as u64);
                let path = sampler.sample(&mut rng);
                let y = y_functional(&path, &vi, rho, spec)?;
                let dev = y.sup_deviation(best_value);
                s.within += usize::from(dev <= options.y_tol);
                s.non_increasing += usize::from(y.max_rise <= rise_tol);
                s.max_rise = s.max_rise.max(y.max_rise);
                s.dev_sum += dev;
                s.dev_max = s.dev_max.max(dev);
                s.switches += path.switches();
                let mut lambda = 0.0;
                let mut prev_u = spec.efforts[path.initial_regime()];
                for (node, (e, sv)) in s.effort.iter_mut().zip(s.survival.iter_mut()).enumerate() {
                    let t = grid.time(node);
                    let u = spec.efforts[path.regime_at(t)];
                    if node > 0 {
                        let t0 = grid.time(node - 1);
                        lambda += cumulative_effort(&path, spec, t0, t, prev_u);
                    }
                    *e += u;
                    *sv += (-lambda).exp();
                    prev_u = u;
                }
            }
            Ok(s)
        })
        .collect();

    let mut within = 0;
    let mut non_increasing = 0;
    let mut max_rise = 0.0_f64;
    let mut dev_sum = 0.0;
    let mut dev_max = 0.0_f64;
    let mut switches = 0;
    let mut effort = vec![0.0; nn];
    let mut survival = vec![0.0; nn];
    for part in parts {
        let p = part?;
        within += p.within;
        non_increasing += p.non_increasing;
        max_rise = max_rise.max(p.max_rise);
        dev_sum += p.dev_sum;
        dev_max = dev_max.max(p.dev_max);
        switches += p.switches;
        effort.iter_mut().zip(&p.effort).for_each(|(a, b)| *a += b);
        survival.iter_mut().zip(&p.survival).for_each(|(a, b)| *a += b);
    }
    let n = options.sample_count as f64;
    let theta_bar = GridFunction::from_raw(*grid, 1, effort.iter().map(|e| e / n).collect());
    let rho_theta = consistency_rho(&theta_bar, spec)?;
    let rho_survival = GridFunction::from_raw(*grid, 1, survival.iter().map(|s| 1.0 - s / n).collect());

    let report = VerificationReport {
        eta,
        fp_iterations: fp.iterations,
        final_exploitability: state.history.last().map_or(f64::NAN, |r| r.exploitability),
        vi_initial_value: vi.initial().to_vec(),
        regularized_initial_value: equilibrium.value.initial().to_vec(),
        best_value,
        vi_residual: residual.sup_min_branch,
        sample_count: options.sample_count,
        y_tol: options.y_tol,
        rise_tol,
        fraction_within_y_tol: within as f64 / n,
        fraction_non_increasing: non_increasing as f64 / n,
        max_y_rise: max_rise,
        mean_y_deviation: dev_sum / n,
        max_y_deviation: dev_max,
        mean_switches: switches as f64 / n,
        rho_gap_average_effort: rho_theta.sup_distance(rho),
        rho_gap_survival: rho_survival.sup_distance(rho.as_grid_function()),
        nu,
        support: support_set(vi.initial(), nu),
    };
    Ok(Verification {
        report,
        fp,
        equilibrium,
        vi,
    })
}

/// `int_{t0}^{t1} theta` along `path`; `u0` is the effort at `t0`.
fn cumulative_effort(path: &crate::limit::paths::SwitchingPath, spec: &ModelSpec, t0: f64, t1: f64, u0: f64) -> f64 {
    let sigma = path.sigma();
    let kappa = path.kappa();
    let first = sigma.partition_point(|&s| s <= t0);
    let mut acc = 0.0;
    let mut t = t0;
    let mut u = u0;
    for n in first..sigma.len() {
        if sigma[n] > t1 {
            break;
        }
        acc += u * (sigma[n] - t);
        t = sigma[n];
        u = spec.efforts[kappa[n]];
    }
    acc + u * (t1 - t)
}
