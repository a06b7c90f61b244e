#![allow(dead_code)]

use rankmfg::grid::{AggregateProgress, GridFunction, TimeGrid};
use rankmfg::kolmogorov::consistency_rho;
use rankmfg::model::{ModelSpec, RewardScheme};

pub fn desk() -> ModelSpec {
    ModelSpec::new(
        vec![0.5, 1.0, 2.0],
        vec![0.0, 0.05, 0.2],
        vec![vec![0.0, 0.1, 0.15], vec![0.1, 0.0, 0.1], vec![0.15, 0.1, 0.0]],
        RewardScheme::Power { a: 1.0, p: 2.0 },
    )
    .unwrap()
}

pub fn single() -> ModelSpec {
    ModelSpec::new(
        vec![1.0],
        vec![0.0],
        vec![vec![0.0]],
        RewardScheme::Linear { a: 1.0, b: 1.0 },
    )
    .unwrap()
}

/// Coarse grid for the desk instance: `h = 0.01`, tail `1e-6`.
pub fn coarse(spec: &ModelSpec) -> TimeGrid {
    TimeGrid::with_tail_tolerance(1e-2, 1e-6, spec.u_min()).unwrap()
}

pub fn exp_progress(grid: TimeGrid, u: f64) -> AggregateProgress {
    AggregateProgress::new(GridFunction::from_fn(grid, 1, |t, o| o[0] = 1.0 - (-u * t).exp())).unwrap()
}

/// Progress of a population whose average effort is piecewise constant:
/// `levels[i]` on the i-th of `levels.len()` equal pieces of `[0, cut]`,
/// then the last level.
pub fn piecewise_progress(spec: &ModelSpec, grid: TimeGrid, levels: &[f64], cut: f64) -> AggregateProgress {
    let piece = cut / levels.len() as f64;
    let theta = GridFunction::from_fn(grid, 1, |t, o| {
        let i = ((t / piece) as usize).min(levels.len() - 1);
        o[0] = levels[i];
    });
    consistency_rho(&theta, spec).unwrap()
}
