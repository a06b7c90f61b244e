//! Vanishing-entropy sweep: regularized equilibria along a decreasing
//! sequence of `eta`, compared with the obstacle-scheme value at each
//! equilibrium aggregate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fictitious::{run_fp, Equilibrium, FpParams, FpReport};
use crate::grid::TimeGrid;
use crate::hjb::ValueFunction;
use crate::model::ModelSpec;

use super::vi::solve_hjbvi;

/// Relative slack allowed when checking that the gap does not grow.
pub const GAP_SLACK: f64 = 0.1;

pub const DEFAULT_ETAS: [f64; 5] = [0.5, 0.2, 0.1, 0.05, 0.02];

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub equilibrium: Equilibrium,
    pub report: FpReport,
    pub vi: ValueFunction,
    /// `sup_t max_k |V^eta_k - V^VI_k|`.
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eta: f64,
    pub outcome: std::result::Result<SweepRun, String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Sup-distance between consecutive successful equilibrium aggregates.
    pub cauchy: Vec<f64>,
    /// Indices into `entries` where the gap grew by more than the slack
    /// relative to the previous successful entry.
    pub flagged: Vec<usize>,
}

impl SweepReport {
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.outcome.as_ref().ok().map(|r| (e.eta, r.gap)))
            .collect()
    }

    pub fn gap_non_increasing(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn run_one(spec: &ModelSpec, eta: f64, grid: &TimeGrid, params: &FpParams) -> Result<SweepRun> {
    let (_, report, equilibrium) = run_fp(spec, eta, grid, params)?;
    let vi = solve_hjbvi(spec, &equilibrium.rho, grid)?;
    let gap = equilibrium.value.values.sup_distance(&vi.values);
    Ok(SweepRun {
        equilibrium,
        report,
        vi,
        gap,
    })
}

/// Runs fictitious play for every `eta` in parallel. A failed `eta` is
/// recorded with its error and skipped in the diagnostics.
pub fn eta_sweep(spec: &ModelSpec, etas: &[f64], grid: &TimeGrid, params: &FpParams) -> Result<SweepReport> {
    if etas.is_empty() {
        return Err(Error::Config("eta sequence is empty".into()));
    }
    if etas.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Config("every eta must be positive".into()));
    }
    if etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eta sequence must be strictly decreasing".into()));
    }
    let entries: Vec<SweepEntry> = etas
        .par_iter()
        .map(|&eta| SweepEntry {
            eta,
            outcome: run_one(spec, eta, grid, params).map_err(|e| e.to_string()),
        })
        .collect();
    let mut cauchy = Vec::new();
    let mut flagged = Vec::new();
    let mut prev: Option<&SweepRun> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Ok(run) = &e.outcome {
            if let Some(p) = prev {
                cauchy.push(run.equilibrium.rho.sup_distance(&p.equilibrium.rho));
                if run.gap > (1.0 + GAP_SLACK) * p.gap {
                    flagged.push(i);
                }
            }
            prev = Some(run);
        }
    }
    Ok(SweepReport {
        entries,
        cauchy,
        flagged,
    })
}
