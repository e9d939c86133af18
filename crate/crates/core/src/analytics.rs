//! Closed-form predictions of refresh probability, mean AoI and mean delay.
//!
//! The base-station queue is approximated as M/M/1: departures of a stable
//! queue are Poisson, so the number of requests `N` served directly between
//! two refreshes of an item is Poisson with mean
//! `nbar = lambda * (W - 1/mu_r - 1/mu_d)`, and the refresh probability is
//! `E[1/(N+1)]`. The service rate used for the delay is `1/E[X]` with the
//! true two-phase mean service time.

use alloc::vec::Vec;

use crate::error::{ensure_positive, Error, Result};
use crate::math::{one_minus_exp_over, one_minus_refresh};
use crate::model::{Catalog, ServiceRates};

/// Arrival rate and refreshing window of a single-source workload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadPoint {
    pub arrival_rate: f64,
    pub window: f64,
    pub rates: ServiceRates,
}

impl LoadPoint {
    pub fn new(arrival_rate: f64, window: f64, rates: ServiceRates) -> Result<Self> {
        ensure_positive("arrival_rate", arrival_rate)?;
        if !(window >= rates.aoi_floor()) {
            return Err(Error::InvalidParameter {
                name: "window",
                value: window,
                reason: "must be at least 1/mu_r + 1/mu_d",
            });
        }
        Ok(Self {
            arrival_rate,
            window,
            rates,
        })
    }

    /// Time after a refresh during which requests are served directly.
    pub fn slack(&self) -> f64 {
        self.window - self.rates.aoi_floor()
    }
}

/// Mean delay of a queue, or the fact that it has no steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delay {
    Finite(f64),
    Unstable,
}

impl Delay {
    pub fn finite(self) -> Option<f64> {
        match self {
            Delay::Finite(d) => Some(d),
            Delay::Unstable => None,
        }
    }

    pub fn is_unstable(self) -> bool {
        matches!(self, Delay::Unstable)
    }
}

impl From<Result<f64>> for Delay {
    fn from(r: Result<f64>) -> Self {
        match r {
            Ok(d) => Delay::Finite(d),
            Err(_) => Delay::Unstable,
        }
    }
}

/// Predicted steady-state behaviour of one item or of the whole system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Expected number of direct serves per refresh cycle.
    pub nbar: f64,
    pub refresh_probability: f64,
    /// Refreshes per second.
    pub refresh_frequency: f64,
    pub mean_aoi: f64,
    pub mean_delay: Delay,
    pub service_time_mean: f64,
    pub service_time_variance: f64,
}

/// First two moments of the service time `X = I*T_R + T_D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceMoments {
    pub mean: f64,
    pub variance: f64,
}

impl ServiceMoments {
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }
}

/// The two extreme mean delays: refresh on every request (`max`) and never
/// refresh (`min`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBounds {
    pub max: Delay,
    pub min: Delay,
}

pub fn nbar(point: &LoadPoint) -> f64 {
    point.arrival_rate * point.slack()
}

/// `(1 - e^-nbar) / nbar`, with value 1 at `nbar = 0`.
pub fn refresh_probability(nbar: f64) -> f64 {
    debug_assert!(nbar >= 0.0);
    one_minus_exp_over(nbar)
}

pub fn refresh_frequency(point: &LoadPoint) -> f64 {
    refresh_probability(nbar(point)) * point.arrival_rate
}

/// Mean AoI of delivered content for one item served at `arrival_rate`.
fn mean_aoi_at(arrival_rate: f64, window: f64, rates: &ServiceRates) -> f64 {
    // (W + floor)/2 - (1 - e^-nbar)/(2 lambda), rearranged so the floor is
    // reproduced exactly when the slack vanishes.
    let slack = window - rates.aoi_floor();
    rates.aoi_floor() + 0.5 * slack * one_minus_refresh(arrival_rate * slack)
}

pub fn mean_aoi_single(point: &LoadPoint) -> f64 {
    mean_aoi_at(point.arrival_rate, point.window, &point.rates)
}

/// M/M/1 delay `E[X] / (1 - Lambda E[X])` at mean refresh probability `p`.
fn mm1_delay(p: f64, arrival_rate: f64, rates: &ServiceRates) -> Result<f64> {
    let mean_service = p / rates.mu_r() + 1.0 / rates.mu_d();
    let load = arrival_rate * mean_service;
    if load >= 1.0 {
        return Err(Error::Unstable { load });
    }
    Ok(mean_service / (1.0 - load))
}

pub fn mean_delay_single(point: &LoadPoint) -> Result<f64> {
    let p = refresh_probability(nbar(point));
    mm1_delay(p, point.arrival_rate, &point.rates)
}

pub fn delay_bounds(rates: &ServiceRates, arrival_rate: f64) -> DelayBounds {
    DelayBounds {
        max: mm1_delay(1.0, arrival_rate, rates).into(),
        min: mm1_delay(0.0, arrival_rate, rates).into(),
    }
}

pub fn service_time_moments(p: f64, rates: &ServiceRates) -> ServiceMoments {
    let inv_r = 1.0 / rates.mu_r();
    let inv_d = 1.0 / rates.mu_d();
    let miss = 1.0 - p;
    ServiceMoments {
        mean: p * inv_r + inv_d,
        variance: inv_d * inv_d + inv_r * inv_r - miss * miss * inv_r * inv_r,
    }
}

/// Pollaczek-Khinchine mean sojourn time of the two-phase service process.
pub fn mg1_delay(p: f64, arrival_rate: f64, rates: &ServiceRates) -> Result<f64> {
    let moments = service_time_moments(p, rates);
    let load = arrival_rate * moments.mean;
    if load >= 1.0 {
        return Err(Error::Unstable { load });
    }
    Ok(moments.mean + arrival_rate * moments.second_moment() / (2.0 * (1.0 - load)))
}

/// Full prediction for a single-source load point.
pub fn predict_single(point: &LoadPoint) -> Prediction {
    let n = nbar(point);
    let p = refresh_probability(n);
    let moments = service_time_moments(p, &point.rates);
    Prediction {
        nbar: n,
        refresh_probability: p,
        refresh_frequency: p * point.arrival_rate,
        mean_aoi: mean_aoi_single(point),
        mean_delay: mean_delay_single(point).into(),
        service_time_mean: moments.mean,
        service_time_variance: moments.variance,
    }
}

/// Per-item and system-wide predictions for a multi-item catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPrediction {
    /// In catalog order. Each item's `mean_delay` is the system delay: FIFO
    /// service does not distinguish items.
    pub items: Vec<Prediction>,
    /// `refresh_probability` is the request-weighted mean, `mean_aoi` the
    /// request-weighted system AoI and `nbar` the sum over items.
    pub system: Prediction,
}

impl MultiPrediction {
    pub fn is_stable(&self) -> bool {
        !self.system.mean_delay.is_unstable()
    }
}

/// Evaluates a catalog and reports instability inside the result.
pub fn multi_source_evaluate(catalog: &Catalog, rates: &ServiceRates) -> MultiPrediction {
    let total = catalog.total_arrival_rate();
    let mut items = Vec::with_capacity(catalog.len());
    let mut weighted_p = 0.0;
    let mut weighted_aoi = 0.0;
    let mut nbar_sum = 0.0;
    for (item, lambda) in catalog.items().iter().zip(catalog.arrival_rates()) {
        let slack = item.window - rates.aoi_floor();
        let n = lambda * slack;
        let p = refresh_probability(n);
        let aoi = mean_aoi_at(lambda, item.window, rates);
        weighted_p += lambda * p;
        weighted_aoi += lambda * aoi;
        nbar_sum += n;
        items.push((n, p, lambda, aoi));
    }
    let mean_p = weighted_p / total;
    let system_delay: Delay = mm1_delay(mean_p, total, rates).into();
    let moments = service_time_moments(mean_p, rates);
    let items = items
        .into_iter()
        .map(|(n, p, lambda, aoi)| Prediction {
            nbar: n,
            refresh_probability: p,
            refresh_frequency: p * lambda,
            mean_aoi: aoi,
            mean_delay: system_delay,
            service_time_mean: moments.mean,
            service_time_variance: moments.variance,
        })
        .collect();
    MultiPrediction {
        items,
        system: Prediction {
            nbar: nbar_sum,
            refresh_probability: mean_p,
            refresh_frequency: weighted_p,
            mean_aoi: weighted_aoi / total,
            mean_delay: system_delay,
            service_time_mean: moments.mean,
            service_time_variance: moments.variance,
        },
    }
}

/// Like [`multi_source_evaluate`] but fails when the queue is unstable.
pub fn multi_source_predict(catalog: &Catalog, rates: &ServiceRates) -> Result<MultiPrediction> {
    let prediction = multi_source_evaluate(catalog, rates);
    if prediction.is_stable() {
        Ok(prediction)
    } else {
        Err(Error::Unstable {
            load: catalog.total_arrival_rate() * prediction.system.service_time_mean,
        })
    }
}
