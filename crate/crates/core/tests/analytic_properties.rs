use aoi_cache::analytics::{
    delay_bounds, mean_aoi_single, mean_delay_single, multi_source_predict, refresh_frequency,
    refresh_probability, LoadPoint,
};
use aoi_cache::model::{zipf_popularities, Catalog, ServiceRates};
use proptest::prelude::*;

const SIGN_TOL: f64 = 1e-9;

fn rates() -> ServiceRates {
    ServiceRates::new(1000.0, 600.0).unwrap()
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect()
}

/// Asserts the sampled values have nonnegative (convex) or nonpositive
/// (concave) second differences, up to `SIGN_TOL`.
fn assert_curvature(values: &[f64], convex: bool, what: &str) {
    for w in values.windows(3) {
        let d2 = w[0] - 2.0 * w[1] + w[2];
        let signed = if convex { d2 } else { -d2 };
        assert!(signed >= -SIGN_TOL, "{what}: second difference {d2}");
    }
}

fn assert_monotone(values: &[f64], increasing: bool, what: &str) {
    for w in values.windows(2) {
        let d = w[1] - w[0];
        let signed = if increasing { d } else { -d };
        assert!(signed >= -SIGN_TOL, "{what}: first difference {d}");
    }
}

#[test]
fn refresh_probability_is_convex_decreasing() {
    let values: Vec<f64> = grid(0.0, 50.0, 5000)
        .into_iter()
        .map(refresh_probability)
        .collect();
    assert!(values.iter().all(|&p| p > 0.0 && p <= 1.0));
    for w in values.windows(2) {
        assert!(w[1] < w[0]);
    }
    assert_curvature(&values, true, "p(nbar)");
}

#[test]
fn refresh_frequency_shape() {
    let r = rates();
    let window = r.aoi_floor() + 0.01;
    let by_rate: Vec<f64> = grid(1.0, 2000.0, 400)
        .into_iter()
        .map(|l| refresh_frequency(&LoadPoint::new(l, window, r).unwrap()))
        .collect();
    assert_monotone(&by_rate, true, "p*lambda vs lambda");
    assert_curvature(&by_rate, false, "p*lambda vs lambda");

    let by_window: Vec<f64> = grid(r.aoi_floor(), 0.2, 400)
        .into_iter()
        .map(|w| refresh_frequency(&LoadPoint::new(300.0, w, r).unwrap()))
        .collect();
    assert_monotone(&by_window, false, "p*lambda vs W");
    assert_curvature(&by_window, true, "p*lambda vs W");
}

#[test]
fn mean_aoi_in_window() {
    let r = rates();
    let lambda = 250.0;
    let dw = 1e-4;
    let windows = grid(r.aoi_floor(), r.aoi_floor() + 2.0, 20_000);
    let aoi: Vec<f64> = windows
        .iter()
        .map(|&w| mean_aoi_single(&LoadPoint::new(lambda, w, r).unwrap()))
        .collect();
    assert!(aoi.iter().all(|&a| a >= r.aoi_floor()));
    for w in aoi.windows(2) {
        let d = w[1] - w[0];
        assert!(d >= -SIGN_TOL && d <= 0.5 * dw + SIGN_TOL);
    }
    assert_curvature(&aoi, true, "A(W)");
    // Slope tends to one half.
    let n = aoi.len();
    let slope = (aoi[n - 1] - aoi[n - 2]) / dw;
    assert!((slope - 0.5).abs() < 1e-6);
}

#[test]
fn mean_aoi_concave_increasing_in_rate() {
    let r = rates();
    let window = 0.03;
    let aoi: Vec<f64> = grid(0.5, 3000.0, 3000)
        .into_iter()
        .map(|l| mean_aoi_single(&LoadPoint::new(l, window, r).unwrap()))
        .collect();
    assert_monotone(&aoi, true, "A(lambda)");
    assert_curvature(&aoi, false, "A(lambda)");
}

#[test]
fn mean_delay_in_window_and_bounds() {
    let r = rates();
    for &lambda in &[50.0, 200.0, 350.0, 500.0] {
        let bounds = delay_bounds(&r, lambda);
        let d_min = bounds.min.finite().unwrap();
        let d_max = bounds.max.finite();
        let mut last = f64::INFINITY;
        for w in grid(r.aoi_floor(), 1.0, 2000) {
            let Ok(d) = mean_delay_single(&LoadPoint::new(lambda, w, r).unwrap()) else {
                assert!(d_max.is_none(), "unstable point inside a stable bound");
                continue;
            };
            assert!(d <= last + SIGN_TOL);
            assert!(d >= d_min - SIGN_TOL);
            if let Some(d_max) = d_max {
                assert!(d <= d_max + SIGN_TOL);
            }
            last = d;
        }
    }
}

proptest! {
    #[test]
    fn single_source_invariants(
        mu_d in 100.0..5000.0f64,
        mu_r in 100.0..5000.0f64,
        lambda in 0.1..3000.0f64,
        extra in 0.0..1.0f64,
    ) {
        let r = ServiceRates::new(mu_d, mu_r).unwrap();
        let point = LoadPoint::new(lambda, r.aoi_floor() + extra, r).unwrap();
        let n = aoi_cache::analytics::nbar(&point);
        let p = refresh_probability(n);
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!(mean_aoi_single(&point) >= r.aoi_floor());
        let bounds = delay_bounds(&r, lambda);
        if let Ok(d) = mean_delay_single(&point) {
            prop_assert!(d >= bounds.min.finite().unwrap() * (1.0 - 1e-12));
            if let Some(max) = bounds.max.finite() {
                prop_assert!(d <= max * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn zipf_catalog_rates_add_up(
        count in 1usize..60,
        nu in 0.0..3.0f64,
        total in 0.01..1e5f64,
    ) {
        let q = zipf_popularities(count, nu).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(q.iter().all(|&x| x > 0.0));
        let r = ServiceRates::new(1000.0, 1000.0).unwrap();
        let catalog = Catalog::with_common_window(&q, 0.01, total, &r).unwrap();
        let sum: f64 = catalog.arrival_rates().sum();
        prop_assert!((sum - total).abs() <= 1e-9 * total);
    }

    /// p_c depends on (lambda_c, W_c) only through nbar_c.
    #[test]
    fn per_item_probability_depends_on_nbar_only(
        kappa in 0.1..10.0f64,
        nu in 0.0..1.5f64,
    ) {
        let r = ServiceRates::new(50_000.0, 50_000.0).unwrap();
        let q = zipf_popularities(5, nu).unwrap();
        let total = 500.0;
        let slack = 0.02;
        let base = Catalog::with_common_window(&q, r.aoi_floor() + slack, total, &r).unwrap();
        let scaled =
            Catalog::with_common_window(&q, r.aoi_floor() + slack / kappa, total * kappa, &r).unwrap();
        let a = multi_source_predict(&base, &r).unwrap();
        let b = multi_source_predict(&scaled, &r).unwrap();
        for (x, y) in a.items.iter().zip(&b.items) {
            prop_assert!((x.nbar - y.nbar).abs() < 1e-9 * x.nbar.max(1.0));
            prop_assert!((x.refresh_probability - y.refresh_probability).abs() < 1e-9);
        }
    }
}
