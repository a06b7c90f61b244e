//! Exhaustive search over pure strategies with few switches on a coarse
//! sub-grid; an independent check of the obstacle scheme.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{AggregateProgress, TimeGrid};
use crate::model::ModelSpec;

use super::paths::{pure_payoff, SwitchingPath};

/// Largest number of candidate paths enumerated.
pub const MAX_CANDIDATES: f64 = 1e7;
/// Largest supported switch count.
pub const MAX_SWITCHES: usize = 3;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of candidate paths the enumeration visits.
pub fn candidate_count(regimes: usize, switch_nodes: usize, max_switches: usize) -> f64 {
    let k = regimes as f64;
    (0..=max_switches)
        .map(|m| k * binomial(switch_nodes, m) * (k - 1.0).powi(m as i32))
        .sum()
}

/// Discounted value of staying in each regime from every node to the horizon,
/// by the same trapezoid rule as [`pure_payoff`].
struct Tails {
    k: usize,
    tail: Vec<f64>,
    decay: Vec<f64>,
}

impl Tails {
    fn new(spec: &ModelSpec, rho: &AggregateProgress) -> Self {
        let grid = rho.grid();
        let k = spec.regimes();
        let n = grid.n_steps();
        let h = grid.step();
        let mut tail = vec![0.0; grid.n_nodes() * k];
        for a in 0..k {
            let u = spec.efforts[a];
            let e = (-u * h).exp();
            let f = |i: usize| u * spec.reward.value(rho.at(i)) - spec.costs[a];
            let mut b = 0.0;
            let mut f_hi = f(n);
            for i in (0..n).rev() {
                let f_lo = f(i);
                b = e * b + 0.5 * h * (f_lo + e * f_hi);
                tail[i * k + a] = b;
                f_hi = f_lo;
            }
        }
        let decay = spec.efforts.to_vec();
        Self { k, tail, decay }
    }

    #[inline]
    fn at(&self, i: usize, a: usize) -> f64 {
        self.tail[i * self.k + a]
    }
}

struct Search<'a> {
    spec: &'a ModelSpec,
    grid: TimeGrid,
    tails: &'a Tails,
    nodes: &'a [usize],
    max_switches: usize,
}

#[derive(Clone)]
struct Best {
    payoff: f64,
    switches: Vec<(usize, usize)>,
}

impl Search<'_> {
    /// Explores continuations from grid node `node` in regime `k`, with
    /// discount `d` and payoff `acc` accumulated so far.
    #[allow(clippy::too_many_arguments)]
    fn explore(
        &self,
        node: usize,
        k: usize,
        d: f64,
        acc: f64,
        first_idx: usize,
        stack: &mut Vec<(usize, usize)>,
        best: &mut Best,
    ) {
        let stay = acc + d * self.tails.at(node, k);
        if stay > best.payoff {
            best.payoff = stay;
            best.switches = stack.clone();
        }
        if stack.len() == self.max_switches {
            return;
        }
        let u = self.tails.decay[k];
        for idx in first_idx..self.nodes.len() {
            let b = self.nodes[idx];
            let e = (-u * (self.grid.time(b) - self.grid.time(node))).exp();
            let seg = self.tails.at(node, k) - e * self.tails.at(b, k);
            let db = d * e;
            let base = acc + d * seg;
            for j in 0..self.spec.regimes() {
                if j == k {
                    continue;
                }
                stack.push((b, j));
                self.explore(
                    b,
                    j,
                    db,
                    base - db * self.spec.switching_cost(k, j),
                    idx + 1,
                    stack,
                    best,
                );
                stack.pop();
            }
        }
    }
}

/// Best pure strategy with at most `max_switches` switches, each at a grid
/// node whose index is a positive multiple of `stride` and precedes the
/// horizon. Returns the path and its [`pure_payoff`].
pub fn brute_force_best_response(
    spec: &ModelSpec,
    rho: &AggregateProgress,
    grid: &TimeGrid,
    max_switches: usize,
    stride: usize,
) -> Result<(SwitchingPath, f64)> {
    if rho.grid() != grid {
        return Err(Error::GridMismatch("progress and oracle grids differ".into()));
    }
    if stride == 0 {
        return Err(Error::Config("switch grid stride must be positive".into()));
    }
    if max_switches > MAX_SWITCHES {
        return Err(Error::Config(format!("at most {MAX_SWITCHES} switches are supported")));
    }
    let nodes: Vec<usize> = (1..).map(|m| m * stride).take_while(|&i| i < grid.n_steps()).collect();
    let count = candidate_count(spec.regimes(), nodes.len(), max_switches);
    if count > MAX_CANDIDATES {
        return Err(Error::Config(format!(
            "{count:.3e} candidate paths exceed the budget of {MAX_CANDIDATES:.0e}; \
             increase the stride or reduce max_switches"
        )));
    }
    let tails = Tails::new(spec, rho);
    let search = Search {
        spec,
        grid: *grid,
        tails: &tails,
        nodes: &nodes,
        max_switches,
    };
    // one task per initial regime and first switch node (or none)
    let tasks: Vec<(usize, Option<usize>)> = (0..spec.regimes())
        .flat_map(|k| std::iter::once((k, None)).chain((0..nodes.len()).map(move |i| (k, Some(i)))))
        .collect();
    let results: Vec<Best> = tasks
        .par_iter()
        .map(|&(k0, first)| {
            let mut best = Best {
                payoff: f64::NEG_INFINITY,
                switches: Vec::new(),
            };
            match first {
                None => {
                    best.payoff = tails.at(0, k0);
                }
                Some(idx) if max_switches > 0 => {
                    let b = nodes[idx];
                    let e = (-tails.decay[k0] * grid.time(b)).exp();
                    let seg = tails.at(0, k0) - e * tails.at(b, k0);
                    let mut stack = Vec::with_capacity(max_switches);
                    for j in 0..spec.regimes() {
                        if j == k0 {
                            continue;
                        }
                        stack.push((b, j));
                        search.explore(
                            b,
                            j,
                            e,
                            seg - e * spec.switching_cost(k0, j),
                            idx + 1,
                            &mut stack,
                            &mut best,
                        );
                        stack.pop();
                    }
                }
                Some(_) => {}
            }
            best
        })
        .collect();
    let (winner, best) = results
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(wi, wp), (i, b)| {
            if b.payoff > wp {
                (i, b.payoff)
            } else {
                (wi, wp)
            }
        });
    if !best.is_finite() {
        return Err(Error::NonFinite {
            what: "brute-force enumeration",
            time: 0.0,
        });
    }
    let k0 = tasks[winner].0;
    let mut sigma = vec![0.0];
    let mut kappa = vec![k0];
    for &(b, j) in &results[winner].switches {
        sigma.push(grid.time(b));
        kappa.push(j);
    }
    let path = SwitchingPath::from_trusted(sigma, kappa);
    let payoff = pure_payoff(&path, rho, spec)?;
    Ok((path, payoff))
}
