//! Finite-population simulation under a regularized policy.
//!
//! Each agent's regime follows the Markov chain with generator `pi(t)`,
//! simulated by thinning, and arrives at the first jump of a Cox process with
//! intensity equal to its current effort. Agents are independent; agent `a`
//! draws from the ChaCha8 stream `a` of the master seed, so results do not
//! depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fictitious::Equilibrium;
use crate::grid::{GridFunction, TimeGrid};
use crate::hjb::Policy;
use crate::kolmogorov::solve_forward;
use crate::limit::paths::SwitchingPath;
use crate::model::ModelSpec;

const CHUNK: usize = 2048;

/// RNG for agent `index` of the population seeded by `seed`.
pub fn agent_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Reusable sampler for regime paths under one policy.
pub struct PathSampler<'a> {
    policy: &'a Policy,
    bound: f64,
    cdf: Vec<f64>,
}

impl<'a> PathSampler<'a> {
    pub fn new(policy: &'a Policy) -> Self {
        let mut acc = 0.0;
        let cdf = policy
            .initial
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self {
            policy,
            bound: policy.max_rate(),
            cdf,
        }
    }

    /// Thinning bound `B`: the largest off-diagonal rate on the grid.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn initial<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cdf[self.cdf.len() - 1];
        let k = self.cdf.partition_point(|&c| c <= u);
        // skip zero-probability regimes at the top end
        let mut k = k.min(self.cdf.len() - 1);
        while k > 0 && self.policy.initial[k] == 0.0 {
            k -= 1;
        }
        k
    }

    /// Draws the initial regime from `Delta`, then proposes jumps at rate
    /// `(K-1) B` to a uniformly chosen other regime `j`, accepting with
    /// probability `pi_kj(t) / B`. The path is truncated at the horizon.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> SwitchingPath {
        let k_count = self.policy.regimes();
        let mut k = self.initial(rng);
        let mut sigma = vec![0.0];
        let mut kappa = vec![k];
        if self.bound > 0.0 && k_count > 1 {
            let horizon = self.policy.grid().horizon();
            let total = (k_count - 1) as f64 * self.bound;
            let mut t = 0.0;
            loop {
                let e: f64 = rng.sample(Exp1);
                t += e / total;
                if t >= horizon {
                    break;
                }
                let mut j = rng.random_range(0..k_count - 1);
                if j >= k {
                    j += 1;
                }
                let rate = self.policy.rates.interpolate_component(t, k * k_count + j);
                if rng.random::<f64>() * self.bound < rate && t > sigma[sigma.len() - 1] {
                    sigma.push(t);
                    kappa.push(j);
                    k = j;
                }
            }
        }
        SwitchingPath::from_trusted(sigma, kappa)
    }
}

/// One path from `(pi, Delta)`.
pub fn sample_path<R: Rng>(policy: &Policy, rng: &mut R) -> SwitchingPath {
    PathSampler::new(policy).sample(rng)
}

/// Arrival time when the cumulative effort along `path` first reaches
/// `clock`, or `None` if that happens after `horizon`.
pub fn arrival_time(path: &SwitchingPath, spec: &ModelSpec, clock: f64, horizon: f64) -> Option<f64> {
    let (sigma, kappa) = (path.sigma(), path.kappa());
    let mut lambda = 0.0;
    for n in 0..sigma.len() {
        let start = sigma[n];
        let end = if n + 1 < sigma.len() { sigma[n + 1] } else { horizon };
        let u = spec.efforts[kappa[n]];
        let next = lambda + u * (end - start);
        if next >= clock {
            let tau = start + (clock - lambda) / u;
            return (tau <= horizon).then_some(tau);
        }
        lambda = next;
    }
    None
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_agents: usize,
    pub seed: u64,
    pub policy: Policy,
    pub grid: TimeGrid,
    /// Node stride used when exporting trajectories.
    pub record_stride: usize,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub n_agents: usize,
    /// Empirical fraction of agents racing in each regime.
    pub mass: GridFunction,
    /// Empirical arrived fraction.
    pub rho: GridFunction,
    pub ode_mass: GridFunction,
    pub ode_rho: GridFunction,
    pub sup_gap_rho: f64,
    pub sup_gap_mass: f64,
    pub initial_frequencies: Vec<f64>,
    pub mean_switches: f64,
    pub record_stride: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimSummary {
    pub n_agents: usize,
    pub sup_gap_rho: f64,
    pub sup_gap_mass: f64,
    pub mean_switches: f64,
}

impl SimReport {
    pub fn summary(&self) -> SimSummary {
        SimSummary {
            n_agents: self.n_agents,
            sup_gap_rho: self.sup_gap_rho,
            sup_gap_mass: self.sup_gap_mass,
            mean_switches: self.mean_switches,
        }
    }
}

struct Tally {
    diff: Vec<i64>,
    initial: Vec<u64>,
    switches: u64,
}

/// Simulates `n_agents` independent agents and compares the empirical
/// occupancy and progress with the forward equation for the same policy.
pub fn simulate_population(config: &SimConfig, spec: &ModelSpec) -> Result<SimReport> {
    if config.n_agents == 0 {
        return Err(Error::Config("n_agents must be at least 1".into()));
    }
    if config.policy.grid() != &config.grid {
        return Err(Error::GridMismatch("policy and simulation grids differ".into()));
    }
    let grid = config.grid;
    let k = spec.regimes();
    let nn = grid.n_nodes();
    let horizon = grid.horizon();
    let sampler = PathSampler::new(&config.policy);
    let chunks = config.n_agents.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally {
                diff: vec![0; (nn + 1) * k],
                initial: vec![0; k],
                switches: 0,
            };
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(config.n_agents);
            for a in lo..hi {
                let mut rng = agent_rng(config.seed, a as u64);
                let path = sampler.sample(&mut rng);
                let clock: f64 = rng.sample(Exp1);
                let tau = arrival_time(&path, spec, clock, horizon);
                t.initial[path.initial_regime()] += 1;
                t.switches += path.switches() as u64;
                let (sigma, kappa) = (path.sigma(), path.kappa());
                for n in 0..sigma.len() {
                    let start = sigma[n];
                    if tau.is_some_and(|tau| start >= tau) {
                        break;
                    }
                    let first = grid.first_node_at_or_after(start);
                    let last_seg = n + 1 == sigma.len();
                    let stop = match tau {
                        Some(tau) if !last_seg => grid.first_node_at_or_after(tau.min(sigma[n + 1])),
                        Some(tau) => grid.first_node_at_or_after(tau),
                        None if last_seg => nn,
                        None => grid.first_node_at_or_after(sigma[n + 1]),
                    };
                    if stop > first {
                        t.diff[first * k + kappa[n]] += 1;
                        t.diff[stop * k + kappa[n]] -= 1;
                    }
                }
            }
            t
        })
        .reduce(
            || Tally {
                diff: vec![0; (nn + 1) * k],
                initial: vec![0; k],
                switches: 0,
            },
            |mut a, b| {
                a.diff.iter_mut().zip(&b.diff).for_each(|(x, y)| *x += y);
                a.initial.iter_mut().zip(&b.initial).for_each(|(x, y)| *x += y);
                a.switches += b.switches;
                a
            },
        );

    let n = config.n_agents as f64;
    let mut mass = vec![0.0; nn * k];
    let mut rho = vec![0.0; nn];
    let mut running = vec![0i64; k];
    for i in 0..nn {
        let mut racing = 0i64;
        for c in 0..k {
            running[c] += tally.diff[i * k + c];
            mass[i * k + c] = running[c] as f64 / n;
            racing += running[c];
        }
        rho[i] = (config.n_agents as i64 - racing) as f64 / n;
    }
    let mass = GridFunction::from_raw(grid, k, mass);
    let rho = GridFunction::from_raw(grid, 1, rho);

    let ode = solve_forward(spec, &config.policy, &grid)?;
    let ode_rho = GridFunction::from_raw(grid, 1, (0..nn).map(|i| 1.0 - ode.total_mass(i)).collect());
    let sup_gap_rho = rho.sup_distance(&ode_rho);
    let sup_gap_mass = mass.sup_distance(&ode.mass);
    Ok(SimReport {
        n_agents: config.n_agents,
        mass,
        rho,
        ode_mass: ode.mass,
        ode_rho,
        sup_gap_rho,
        sup_gap_mass,
        initial_frequencies: tally.initial.iter().map(|&c| c as f64 / n).collect(),
        mean_switches: tally.switches as f64 / n,
        record_stride: config.record_stride.max(1),
    })
}

/// Realized payoff of one agent: `R(rho(tau))` on arrival before the horizon,
/// minus running costs up to `min(tau, T)` and the switching costs paid
/// before arrival.
pub fn realized_payoff(path: &SwitchingPath, tau: Option<f64>, rho: &GridFunction, spec: &ModelSpec) -> f64 {
    let horizon = rho.grid().horizon();
    let stop = tau.unwrap_or(horizon);
    let (sigma, kappa) = (path.sigma(), path.kappa());
    let mut payoff = match tau {
        Some(t) => spec.reward.value(rho.interpolate_component(t, 0)),
        None => 0.0,
    };
    for n in 0..sigma.len() {
        let start = sigma[n];
        if start >= stop {
            break;
        }
        if n > 0 {
            payoff -= spec.switching_cost(kappa[n - 1], kappa[n]);
        }
        let end = if n + 1 < sigma.len() {
            sigma[n + 1].min(stop)
        } else {
            stop
        };
        payoff -= spec.costs[kappa[n]] * (end - start);
    }
    payoff
}

#[derive(Debug, Clone)]
pub struct DeviationConfig {
    /// Population size used to freeze the empirical progress.
    pub n_population: usize,
    /// Agents sampled per strategy.
    pub n_deviants: usize,
    pub seed: u64,
    /// Extra pure strategies to test, e.g. brute-force best responses.
    pub extra_paths: Vec<SwitchingPath>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyEstimate {
    pub label: String,
    pub mean: f64,
    pub std_error: f64,
    /// Mean minus the equilibrium mean.
    pub gain: f64,
    pub gain_std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub n_population: usize,
    pub n_deviants: usize,
    pub equilibrium: StrategyEstimate,
    pub deviations: Vec<StrategyEstimate>,
    /// Largest estimated gain over all deviations.
    pub max_gain: f64,
    pub max_gain_std_error: f64,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimates the payoff of following the equilibrium policy and of each pure
/// deviation (every constant regime plus `extra_paths`) against the frozen
/// empirical progress of a large equilibrium population.
pub fn deviation_test(
    spec: &ModelSpec,
    equilibrium: &Equilibrium,
    config: &DeviationConfig,
) -> Result<DeviationReport> {
    if config.n_deviants == 0 {
        return Err(Error::Config("n_deviants must be at least 1".into()));
    }
    let grid = *equilibrium.policy.grid();
    let population = simulate_population(
        &SimConfig {
            n_agents: config.n_population,
            seed: config.seed,
            policy: equilibrium.policy.clone(),
            grid,
            record_stride: 1,
        },
        spec,
    )?;
    let rho = &population.rho;
    let horizon = grid.horizon();
    let sampler = PathSampler::new(&equilibrium.policy);

    let estimate = |strategy: u64, draw: &(dyn Fn(&mut ChaCha8Rng) -> SwitchingPath + Sync)| -> Vec<f64> {
        (0..config.n_deviants)
            .into_par_iter()
            .map(|i| {
                // streams above 2^40 never collide with population agents
                let mut rng = agent_rng(config.seed, ((strategy + 1) << 40) | i as u64);
                let path = draw(&mut rng);
                let clock: f64 = rng.sample(Exp1);
                let tau = arrival_time(&path, spec, clock, horizon);
                realized_payoff(&path, tau, rho, spec)
            })
            .collect()
    };

    let eq_samples = estimate(0, &|rng| sampler.sample(rng));
    let (eq_mean, eq_se) = mean_and_se(&eq_samples);
    let mut deviations = Vec::new();
    let mut strategies: Vec<(String, SwitchingPath)> = (0..spec.regimes())
        .map(|k| (format!("constant regime {}", k + 1), SwitchingPath::constant(k)))
        .collect();
    for (i, p) in config.extra_paths.iter().enumerate() {
        strategies.push((format!("path {}", i + 1), p.clone()));
    }
    for (s, (label, path)) in strategies.into_iter().enumerate() {
        let samples = estimate(s as u64 + 1, &|_| path.clone());
        let (mean, se) = mean_and_se(&samples);
        deviations.push(StrategyEstimate {
            label,
            mean,
            std_error: se,
            gain: mean - eq_mean,
            gain_std_error: (se * se + eq_se * eq_se).sqrt(),
        });
    }
    let top = deviations
        .iter()
        .fold(None::<&StrategyEstimate>, |acc, d| match acc {
            Some(a) if a.gain >= d.gain => Some(a),
            _ => Some(d),
        })
        .expect("at least one regime");
    Ok(DeviationReport {
        n_population: config.n_population,
        n_deviants: config.n_deviants,
        max_gain: top.gain,
        max_gain_std_error: top.gain_std_error,
        equilibrium: StrategyEstimate {
            label: "equilibrium policy".into(),
            mean: eq_mean,
            std_error: eq_se,
            gain: 0.0,
            gain_std_error: 0.0,
        },
        deviations,
    })
}
