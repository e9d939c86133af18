//! Simulator checks against textbook queueing results that do not go
//! through the closed-form AoI model.

use aoi_cache::analytics::{mg1_delay, refresh_probability};
use aoi_cache::desim::{replicate, run_simulation, run_simulation_observed, Policy, SimConfig};
use aoi_cache::model::{zipf_popularities, Catalog, ServiceRates};

fn config(lambda: f64, window: f64, items: usize, policy: Policy, budget: usize) -> SimConfig {
    let rates = ServiceRates::new(1000.0, 1000.0).unwrap();
    let q = zipf_popularities(items, 0.0).unwrap();
    let catalog = Catalog::with_common_window(&q, window, lambda, &rates).unwrap();
    SimConfig {
        request_budget: budget,
        policy,
        ..SimConfig::new(2024, rates, catalog)
    }
}

fn within(actual: f64, expected: f64, rel: f64) -> bool {
    (actual - expected).abs() <= rel * expected.abs()
}

#[test]
fn never_refresh_is_mm1() {
    let cfg = config(400.0, 0.01, 5, Policy::NeverRefresh, 100_000);
    let report = replicate(&cfg, 8).unwrap();
    assert!(report.items.iter().all(|i| i.refresh_fraction.mean == 0.0));
    let expected = 1.0 / (1000.0 - 400.0);
    let got = report.aggregate.mean_delay;
    assert!((got.mean - expected).abs() <= 3.0 * got.uncertainty.max(0.01 * expected));
}

#[test]
fn always_refresh_is_mg1_with_two_phase_service() {
    let cfg = config(300.0, 0.01, 1, Policy::AlwaysRefresh, 100_000);
    let report = replicate(&cfg, 8).unwrap();
    assert_eq!(report.aggregate.refresh_fraction.mean, 1.0);
    let rates = cfg.rates;
    let expected = mg1_delay(1.0, 300.0, &rates).unwrap();
    assert!(within(report.aggregate.mean_delay.mean, expected, 0.03));
    // Every refreshed delivery is exactly fetch plus delivery old.
    assert!(within(
        report.aggregate.mean_aoi.mean,
        rates.aoi_floor(),
        0.01
    ));
}

#[test]
fn light_load_refresh_fraction_is_renewal_ratio() {
    // With essentially no queueing a refresh cycle holds the refreshing
    // request plus the Poisson(lambda W) arrivals inside the window, so the
    // long-run refresh fraction is 1 / (1 + lambda W).
    for &(lambda, window) in &[(5.0, 0.01), (10.0, 0.02), (2.0, 0.1)] {
        let cfg = config(lambda, window, 1, Policy::FreshnessWindow, 200_000);
        let report = run_simulation(&cfg).unwrap();
        let expected = 1.0 / (1.0 + lambda * window);
        let got = report.aggregate.refresh_fraction.mean;
        assert!(
            (got - expected).abs() < 0.005,
            "lambda={lambda} W={window}: {got} vs {expected}"
        );
    }
}

#[test]
fn refresh_fraction_regimes() {
    let floor = 0.002;
    let quiet = run_simulation(&config(0.5, floor, 1, Policy::FreshnessWindow, 20_000)).unwrap();
    assert!(quiet.aggregate.refresh_fraction.mean > 0.99);
    let busy = run_simulation(&config(450.0, 0.5, 1, Policy::FreshnessWindow, 50_000)).unwrap();
    assert!(busy.aggregate.refresh_fraction.mean < 0.01);
    // Same trend as the closed form.
    assert!(refresh_probability(450.0 * 0.498) < 0.01);
}

#[test]
fn refresh_fraction_decreases_with_load() {
    let mut last = f64::INFINITY;
    for &lambda in &[20.0, 60.0, 120.0, 250.0, 400.0] {
        let report =
            replicate(&config(lambda, 0.01, 1, Policy::FreshnessWindow, 50_000), 4).unwrap();
        let p = report.aggregate.refresh_fraction.mean;
        assert!(p < last, "lambda={lambda}");
        last = p;
    }
}

#[test]
fn sawtooth_per_item() {
    let cfg = config(600.0, 0.01, 4, Policy::FreshnessWindow, 50_000);
    let windows: Vec<f64> = cfg.catalog.items().iter().map(|i| i.window).collect();
    let mut last_departure = vec![f64::NEG_INFINITY; windows.len()];
    run_simulation_observed(&cfg, |r| {
        let i = (r.item_id - 1) as usize;
        assert!(r.departure_time >= last_departure[i]);
        last_departure[i] = r.departure_time;
        if r.refreshed {
            assert_eq!(r.aoi_at_delivery, r.fetch_time + r.delivery_time);
        } else {
            let age = r.aoi_at_service_start.unwrap();
            assert!(age < windows[i]);
            assert!(r.aoi_at_delivery > age);
            assert!(r.aoi_at_delivery < windows[i] + r.delivery_time);
        }
    })
    .unwrap();
}

#[test]
fn reports_are_bit_identical() {
    let cfg = config(500.0, 0.005, 10, Policy::FreshnessWindow, 30_000);
    let a = replicate(&cfg, 3).unwrap();
    let b = replicate(&cfg, 3).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    for (x, y) in a.items.iter().zip(&b.items) {
        assert_eq!(x.mean_aoi.mean.to_bits(), y.mean_aoi.mean.to_bits());
        assert_eq!(
            x.mean_delay.uncertainty.to_bits(),
            y.mean_delay.uncertainty.to_bits()
        );
    }
}

#[test]
fn policies_share_arrival_pattern() {
    // Common random numbers: the arrival stream does not depend on policy.
    let mut arrivals = [Vec::new(), Vec::new()];
    for (slot, policy) in [Policy::FreshnessWindow, Policy::AlwaysRefresh]
        .into_iter()
        .enumerate()
    {
        let cfg = config(200.0, 0.01, 3, policy, 1000);
        run_simulation_observed(&cfg, |r| arrivals[slot].push((r.arrival_time, r.item_id)))
            .unwrap();
    }
    assert_eq!(arrivals[0], arrivals[1]);
}

#[test]
fn half_width_shrinks_like_inverse_sqrt() {
    let cfg = config(300.0, 0.01, 1, Policy::FreshnessWindow, 10_000);
    let hw: Vec<f64> = [4usize, 16, 64]
        .iter()
        .map(|&r| replicate(&cfg, r).unwrap().aggregate.mean_delay.uncertainty)
        .collect();
    // Each 4x increase in replications should halve the half-width; allow
    // for the noise in estimating a spread from few runs.
    for w in hw.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.25..1.0).contains(&ratio), "ratio {ratio} ({hw:?})");
    }
    let overall = hw[2] / hw[0];
    assert!(
        (0.125..0.5).contains(&overall),
        "overall {overall} ({hw:?})"
    );
}

#[test]
fn warmup_is_discarded() {
    let mut cfg = config(300.0, 0.01, 2, Policy::FreshnessWindow, 1000);
    cfg.warmup_fraction = 0.5;
    let mut first_arrival = None;
    let report = run_simulation_observed(&cfg, |r| {
        first_arrival.get_or_insert(r.arrival_time);
    })
    .unwrap();
    assert_eq!(report.recorded_requests(), 1000);
    // 500 warmup arrivals at rate 300/s take well over half a second.
    assert!(first_arrival.unwrap() > 1.0);
}
