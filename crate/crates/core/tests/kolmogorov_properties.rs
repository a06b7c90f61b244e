mod common;

use proptest::prelude::*;

use common::{coarse, desk, exp_progress};
use rankmfg::grid::{GridFunction, TimeGrid};
use rankmfg::hjb::{gibbs_policy, solve_hjb_backward, Policy};
use rankmfg::kolmogorov::{aggregate_progress, consistency_rho, solve_forward, OccupationFlux};
use rankmfg::model::ModelSpec;

fn check_bounds(spec: &ModelSpec, policy: &Policy, flux: &OccupationFlux) {
    let grid = *flux.grid();
    let k = spec.regimes();
    let b = policy.max_rate();
    let mut prev = f64::INFINITY;
    for i in 0..grid.n_nodes() {
        let t = grid.time(i);
        let m = flux.mass.node(i);
        let total: f64 = m.iter().sum();
        assert!(total <= (-spec.u_min() * t).exp() + 1e-12, "t={t}: {total}");
        assert!(total <= prev + 1e-15);
        prev = total;
        for (c, &mc) in m.iter().enumerate() {
            assert!(mc >= 0.0);
            let floor = policy.initial[c] * (-(spec.efforts[c] + k as f64 * b) * t).exp() - 1e-8;
            assert!(mc >= floor, "t={t} regime {c}: {mc} < {floor}");
        }
        assert!(flux.flux.node(i).iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn gibbs_occupancy_bounds() {
    let spec = desk();
    let grid = coarse(&spec);
    let rho = exp_progress(grid, 1.0);
    for eta in [0.05, 0.2, 1.0] {
        let v = solve_hjb_backward(&spec, eta, &rho, &grid).unwrap();
        let policy = gibbs_policy(&v, &spec, eta).unwrap();
        let flux = solve_forward(&spec, &policy, &grid).unwrap();
        check_bounds(&spec, &policy, &flux);
        let progress = aggregate_progress(&flux);
        for i in 0..grid.n_nodes() {
            assert_eq!(progress.at(i), 1.0 - flux.mass.node(i).iter().sum::<f64>());
        }
    }
}

#[test]
fn integrated_progress_matches_definition() {
    // rho' = sum_k u_k m_k by trapezoid, against rho = 1 - sum m
    let spec = desk();
    let grid = TimeGrid::new(1e-3, 20_000).unwrap();
    let policy = Policy::constant(
        grid,
        &[vec![0.0, 0.7, 0.2], vec![0.4, 0.0, 0.9], vec![0.3, 0.5, 0.0]],
        vec![0.2, 0.5, 0.3],
    )
    .unwrap();
    let flux = solve_forward(&spec, &policy, &grid).unwrap();
    let rho = aggregate_progress(&flux);
    let h = grid.step();
    let rate = |i: usize| -> f64 { flux.mass.node(i).iter().zip(&spec.efforts).map(|(m, u)| m * u).sum() };
    let mut acc = 0.0;
    for i in 1..grid.n_nodes() {
        acc += 0.5 * h * (rate(i - 1) + rate(i));
        assert!((acc - rho.at(i)).abs() <= 10.0 * h * h, "node {i}");
    }
}

#[test]
fn constant_effort_consistency_closed_form() {
    let spec = desk();
    let grid = TimeGrid::with_tail_tolerance(1e-3, 1e-8, spec.u_min()).unwrap();
    for u in [0.5, 1.0, 1.7, 2.0] {
        let theta = GridFunction::from_fn(grid, 1, |_, o| o[0] = u);
        let rho = consistency_rho(&theta, &spec).unwrap();
        for i in 0..grid.n_nodes() {
            let exact = 1.0 - (-u * grid.time(i)).exp();
            assert!((rho.at(i) - exact).abs() <= 1e-8, "u={u} node {i}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_constant_policies_respect_bounds(
        rates in prop::collection::vec(0.0f64..3.0, 6),
        weights in prop::collection::vec(0.05f64..1.0, 3),
    ) {
        let spec = desk();
        let grid = TimeGrid::new(1e-2, 1500).unwrap();
        let total: f64 = weights.iter().sum();
        let initial: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let m = vec![
            vec![0.0, rates[0], rates[1]],
            vec![rates[2], 0.0, rates[3]],
            vec![rates[4], rates[5], 0.0],
        ];
        let policy = Policy::constant(grid, &m, initial).unwrap();
        let flux = solve_forward(&spec, &policy, &grid).unwrap();
        check_bounds(&spec, &policy, &flux);
        prop_assert!(aggregate_progress(&flux).is_member(spec.u_max(), 1e-12));
    }
}
