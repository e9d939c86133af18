use aoi_cache::analytics::{mean_aoi_single, LoadPoint};
use aoi_cache::model::{zipf_popularities, ServiceRates};
use aoi_cache::optimizer::{
    budget, invert_price, solve, solve_oracle, stationarity_price, OptProblem, OptStatus,
};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

/// Per-item window whose mean AoI equals the budget, by bisection on the
/// closed-form AoI (which increases in W).
fn equal_aoi_window(lambda: f64, rates: ServiceRates, target: f64) -> f64 {
    let aoi = |w: f64| mean_aoi_single(&LoadPoint::new(lambda, w, rates).unwrap());
    let (mut lo, mut hi) = (rates.aoi_floor(), rates.aoi_floor() + 1.0);
    while aoi(hi) < target {
        hi = rates.aoi_floor() + 2.0 * (hi - rates.aoi_floor());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if aoi(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn zipf_problem(
    items: usize,
    nu: f64,
    total: f64,
    budget_s: f64,
    rates: ServiceRates,
) -> OptProblem {
    let lambdas = zipf_popularities(items, nu)
        .unwrap()
        .into_iter()
        .map(|q| q * total)
        .collect();
    OptProblem::new(lambdas, rates, budget_s).unwrap()
}

fn check_invariants(problem: &OptProblem) {
    let result = solve(problem).unwrap();
    let floor = problem.rates().aoi_floor();
    assert!(result.windows.iter().all(|&w| w >= floor));
    if result.status != OptStatus::Optimal {
        return;
    }
    let s = budget(problem);
    assert!(result.budget_slack.abs() <= 1e-6 * s);
    let aoi = result.predicted.system.mean_aoi;
    assert!(aoi <= problem.aoi_budget() + 1e-9);
    assert!((aoi - problem.aoi_budget()).abs() <= 1e-8 * problem.aoi_budget());
    for ((&lambda, &n), _) in problem
        .arrival_rates()
        .iter()
        .zip(&result.nbars)
        .zip(&result.windows)
    {
        if n > 1e-10 {
            let residual = (stationarity_price(lambda, n) - result.dual_price).abs();
            assert!(residual <= 1e-6 * result.dual_price);
        }
    }
    let rates = problem.arrival_rates();
    for i in 0..rates.len() {
        for j in 0..rates.len() {
            if rates[i] >= rates[j] {
                assert!(result.windows[i] <= result.windows[j] + 1e-9);
            }
        }
    }
}

#[test]
fn beats_equal_aoi_windows() {
    let rates = ServiceRates::new(4000.0, 1000.0).unwrap();
    for &(items, nu, total, budget_s) in &[
        (10, 0.56, 2000.0, 0.1),
        (5, 1.2, 800.0, 0.02),
        (20, 0.3, 1500.0, 0.05),
    ] {
        let problem = zipf_problem(items, nu, total, budget_s, rates);
        let optimal = solve(&problem).unwrap();
        let windows: Vec<f64> = problem
            .arrival_rates()
            .iter()
            .map(|&l| equal_aoi_window(l, rates, budget_s))
            .collect();
        let nbars: Vec<f64> = problem
            .arrival_rates()
            .iter()
            .zip(&windows)
            .map(|(&l, &w)| l * (w - rates.aoi_floor()))
            .collect();
        // The equal-AoI point is feasible (its consumption meets the budget).
        assert!(problem.consumption(&nbars) <= budget(&problem) * (1.0 + 1e-9));
        assert!(optimal.objective(&problem) <= problem.objective(&nbars) * (1.0 + 1e-12));
    }
}

#[test]
fn random_instances_agree_with_oracle() {
    // Pinned seed so the instance set is fixed.
    let mut runner = TestRunner::new_with_rng(
        Config::default(),
        TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]),
    );
    let strategy = (
        prop::collection::vec(10.0..500.0f64, 1..=8),
        1000.0..8000.0f64,
        200.0..4000.0f64,
        1.05..20.0f64,
    );
    for _ in 0..24 {
        let (lambdas, mu_d, mu_r, budget_factor) =
            strategy.new_tree(&mut runner).unwrap().current();
        let rates = ServiceRates::new(mu_d, mu_r).unwrap();
        let problem = OptProblem::new(lambdas, rates, rates.aoi_floor() * budget_factor).unwrap();
        let fast = solve(&problem).unwrap();
        let slow = solve_oracle(&problem).unwrap();
        let (a, b) = (fast.objective(&problem), slow.objective(&problem));
        assert!((a - b).abs() <= 1e-4 * a, "{problem:?}: {a} vs {b}");
        assert!(a <= b * (1.0 + 1e-9));
        check_invariants(&problem);
    }
}

#[test]
fn single_item_oracle_matches_window() {
    let rates = ServiceRates::new(3000.0, 1500.0).unwrap();
    for &(lambda, budget_s) in &[(50.0, 0.01), (400.0, 0.05), (1000.0, 0.002)] {
        let problem = OptProblem::new(vec![lambda], rates, budget_s).unwrap();
        let fast = solve(&problem).unwrap();
        let slow = solve_oracle(&problem).unwrap();
        assert!((fast.windows[0] - slow.windows[0]).abs() < 1e-6);
        let aoi = mean_aoi_single(&LoadPoint::new(lambda, fast.windows[0], rates).unwrap());
        assert!((aoi - budget_s).abs() < 1e-8 * budget_s);
    }
}

#[test]
fn rescaled_load_still_satisfies_invariants() {
    let rates = ServiceRates::new(20_000.0, 10_000.0).unwrap();
    for &kappa in &[0.25, 1.0, 4.0] {
        check_invariants(&zipf_problem(10, 0.8, 1000.0 * kappa, 0.03, rates));
    }
}

#[test]
fn price_round_trip() {
    for &lambda in &[0.5, 10.0, 2000.0] {
        for &n in &[1e-6, 0.01, 0.5, 3.0, 40.0, 500.0] {
            let back = invert_price(lambda, stationarity_price(lambda, n)).unwrap();
            assert!(
                (back - n).abs() <= 1e-9 * n.max(1e-3),
                "lambda={lambda} n={n} back={back}"
            );
        }
    }
}

proptest! {
    /// Objective and constraint are midpoint convex along random segments.
    #[test]
    fn objective_and_constraint_convex(
        a in prop::collection::vec(0.0..60.0f64, 4),
        b in prop::collection::vec(0.0..60.0f64, 4),
        lambdas in prop::collection::vec(1.0..500.0f64, 4),
    ) {
        let rates = ServiceRates::new(1000.0, 1000.0).unwrap();
        let problem = OptProblem::new(lambdas, rates, 0.1).unwrap();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = |x: &[f64]| problem.objective(x);
        let g = |x: &[f64]| problem.consumption(x);
        prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-9);
        prop_assert!(g(&mid) <= 0.5 * (g(&a) + g(&b)) + 1e-9);
    }

    #[test]
    fn price_monotone(lambda in 0.1..1e4f64, n in 1e-6..200.0f64, dn in 1e-3..10.0f64) {
        prop_assert!(stationarity_price(lambda, n) > stationarity_price(lambda, n + dn));
        prop_assert!(stationarity_price(lambda * 1.5, n) > stationarity_price(lambda, n));
    }
}
