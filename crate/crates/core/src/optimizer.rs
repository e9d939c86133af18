//! Refreshing-window design: minimize the mean delay subject to a system AoI
//! budget.
//!
//! In terms of `n_c = lambda_c * (W_c - floor)` the problem is separable and
//! convex:
//!
//! ```text
//! minimize    sum_c lambda_c * (1 - e^-n_c) / n_c
//! subject to  sum_c (n_c + e^-n_c) <= 2*Lambda*A + C - 2*Lambda*floor
//!             n_c >= 0
//! ```
//!
//! Minimizing the mean refresh probability is equivalent to minimizing the
//! M/M/1 delay. [`solve`] bisects on the budget's dual price; each item's
//! `n_c` follows from inverting its stationarity condition.
//! [`solve_oracle`] is an independent projected-gradient route used to
//! cross-check it.

use alloc::vec::Vec;

use crate::analytics::{multi_source_evaluate, refresh_probability, MultiPrediction};
use crate::error::{ensure_positive, Error, Result};
use crate::math::{one_minus_exp_over, reciprocal_gap};
use crate::model::{Catalog, CatalogItem, ServiceRates};

const TOTAL_RATE_TOLERANCE: f64 = 1e-9;
const BOUNDARY_TOLERANCE: f64 = 1e-12;
const INVERT_TOLERANCE: f64 = 1e-12;
const NBAR_MIN: f64 = 1e-15;
const NBAR_MAX: f64 = 1e6;

/// One window-design instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OptProblem {
    arrival_rates: Vec<f64>,
    rates: ServiceRates,
    aoi_budget: f64,
    total_arrival_rate: f64,
}

impl OptProblem {
    pub fn new(arrival_rates: Vec<f64>, rates: ServiceRates, aoi_budget: f64) -> Result<Self> {
        if arrival_rates.is_empty() {
            return Err(Error::InvalidParameter {
                name: "arrival_rates",
                value: 0.0,
                reason: "need at least one item",
            });
        }
        for &lambda in &arrival_rates {
            ensure_positive("arrival_rate", lambda)?;
        }
        ensure_positive("aoi_budget", aoi_budget)?;
        let total_arrival_rate = arrival_rates.iter().sum();
        Ok(Self {
            arrival_rates,
            rates,
            aoi_budget,
            total_arrival_rate,
        })
    }

    /// Uses the catalog's per-item rates; its windows are ignored.
    pub fn from_catalog(catalog: &Catalog, rates: ServiceRates, aoi_budget: f64) -> Result<Self> {
        let problem = Self::new(catalog.arrival_rates().collect(), rates, aoi_budget)?;
        let declared = catalog.total_arrival_rate();
        if (problem.total_arrival_rate - declared).abs() > TOTAL_RATE_TOLERANCE * declared {
            return Err(Error::InvalidParameter {
                name: "total_arrival_rate",
                value: declared,
                reason: "per-item rates do not add up to the total",
            });
        }
        Ok(problem)
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn rates(&self) -> &ServiceRates {
        &self.rates
    }

    pub fn aoi_budget(&self) -> f64 {
        self.aoi_budget
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.total_arrival_rate
    }

    pub fn item_count(&self) -> usize {
        self.arrival_rates.len()
    }

    /// Catalog with popularities `lambda_c / Lambda` and the given windows.
    pub fn catalog(&self, windows: &[f64]) -> Result<Catalog> {
        let items = self
            .arrival_rates
            .iter()
            .zip(windows)
            .zip(1u32..)
            .map(|((&lambda, &window), item_id)| CatalogItem {
                item_id,
                popularity: lambda / self.total_arrival_rate,
                window,
            })
            .collect();
        Catalog::new(items, self.total_arrival_rate, &self.rates)
    }

    /// Objective: `sum_c lambda_c p(n_c)`, the total refresh frequency.
    pub fn objective(&self, nbars: &[f64]) -> f64 {
        self.arrival_rates
            .iter()
            .zip(nbars)
            .map(|(&lambda, &n)| lambda * one_minus_exp_over(n))
            .sum()
    }

    /// Budget consumption `sum_c (n_c + e^-n_c)`.
    pub fn consumption(&self, nbars: &[f64]) -> f64 {
        nbars.iter().map(|&n| n + libm::exp(-n)).sum()
    }

    /// Windows `floor + n_c / lambda_c`.
    pub fn windows(&self, nbars: &[f64]) -> Vec<f64> {
        let floor = self.rates.aoi_floor();
        self.arrival_rates
            .iter()
            .zip(nbars)
            .map(|(&lambda, &n)| floor + n / lambda)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptStatus {
    Optimal,
    /// The budget equals the floor: every request must refresh.
    BoundaryAllRefresh,
    /// The optimum exists but its predicted queue is unstable.
    UnstableAtOptimum,
}

impl OptStatus {
    pub fn name(self) -> &'static str {
        match self {
            OptStatus::Optimal => "optimal",
            OptStatus::BoundaryAllRefresh => "boundary_all_refresh",
            OptStatus::UnstableAtOptimum => "unstable_at_optimum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub windows: Vec<f64>,
    pub nbars: Vec<f64>,
    /// Multiplier of the AoI budget constraint.
    pub dual_price: f64,
    pub predicted: MultiPrediction,
    /// Budget minus consumption; nonnegative up to rounding.
    pub budget_slack: f64,
    pub status: OptStatus,
}

impl OptResult {
    /// `sum_c lambda_c p_c`.
    pub fn objective(&self, problem: &OptProblem) -> f64 {
        problem.objective(&self.nbars)
    }
}

/// Right-hand side of the budget constraint,
/// `S = 2*Lambda*A + C - 2*Lambda*floor`.
pub fn budget(problem: &OptProblem) -> f64 {
    let lambda = problem.total_arrival_rate;
    2.0 * lambda * problem.aoi_budget + problem.item_count() as f64
        - 2.0 * lambda * problem.rates.aoi_floor()
}

/// Dual price at which `nbar` is stationary for an item of rate `lambda_c`:
/// `(lambda_c / n) * (1/n - 1/(e^n - 1))`.
///
/// Strictly decreasing in `nbar`, from `+inf` (like `lambda_c / (2 n)`) to 0.
pub fn stationarity_price(lambda_c: f64, nbar: f64) -> f64 {
    lambda_c / nbar * reciprocal_gap(nbar)
}

/// The `nbar >= 0` at which [`stationarity_price`] equals `nu0`.
pub fn invert_price(lambda_c: f64, nu0: f64) -> Result<f64> {
    let failure = || Error::BracketFailure {
        arrival_rate: lambda_c,
        price: nu0,
    };
    if !(nu0 > 0.0) || !(lambda_c > 0.0) {
        return Err(failure());
    }
    if stationarity_price(lambda_c, NBAR_MIN) < nu0 {
        return Err(failure());
    }
    // Start from the small-n asymptote and widen geometrically.
    let guess = (lambda_c / (2.0 * nu0)).clamp(NBAR_MIN, NBAR_MAX);
    let (mut lo, mut hi) = (guess, guess);
    while stationarity_price(lambda_c, lo) < nu0 {
        lo = (lo * 0.5).max(NBAR_MIN);
    }
    while stationarity_price(lambda_c, hi) > nu0 {
        if hi >= NBAR_MAX {
            return Err(failure());
        }
        hi = (hi * 2.0).min(NBAR_MAX);
    }
    for _ in 0..2000 {
        let width = hi - lo;
        if width <= INVERT_TOLERANCE * hi.min(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if stationarity_price(lambda_c, mid) > nu0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn nbars_at(problem: &OptProblem, nu0: f64) -> Result<Vec<f64>> {
    problem
        .arrival_rates
        .iter()
        .map(|&lambda| invert_price(lambda, nu0))
        .collect()
}

fn finish(
    problem: &OptProblem,
    nbars: Vec<f64>,
    dual_price: f64,
    boundary: bool,
) -> Result<OptResult> {
    let windows = problem.windows(&nbars);
    let catalog = problem.catalog(&windows)?;
    let predicted = multi_source_evaluate(&catalog, &problem.rates);
    let status = if !predicted.is_stable() {
        OptStatus::UnstableAtOptimum
    } else if boundary {
        OptStatus::BoundaryAllRefresh
    } else {
        OptStatus::Optimal
    };
    Ok(OptResult {
        budget_slack: budget(problem) - problem.consumption(&nbars),
        windows,
        nbars,
        dual_price,
        predicted,
        status,
    })
}

fn infeasible(problem: &OptProblem) -> Error {
    Error::InfeasibleBudget {
        budget: problem.aoi_budget,
        minimum: problem.rates.aoi_floor(),
    }
}

/// Optimal windows by bisection on the dual price.
pub fn solve(problem: &OptProblem) -> Result<OptResult> {
    let floor = problem.rates.aoi_floor();
    if (problem.aoi_budget - floor).abs() <= BOUNDARY_TOLERANCE {
        let nbars = alloc::vec![0.0; problem.item_count()];
        return finish(problem, nbars, f64::INFINITY, true);
    }
    if problem.aoi_budget < floor {
        return Err(infeasible(problem));
    }
    let target = budget(problem);
    let consumption_at =
        |nu0: f64| -> Result<f64> { Ok(problem.consumption(&nbars_at(problem, nu0)?)) };

    // Consumption falls from +inf to C as the price grows.
    let max_rate = problem.arrival_rates.iter().copied().fold(0.0, f64::max);
    let mut hi = max_rate * 1e6;
    while consumption_at(hi)? > target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NonConvergence { iterations: 0 });
        }
    }
    let mut lo = hi;
    while consumption_at(lo)? < target {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::NonConvergence { iterations: 0 });
        }
    }
    // Geometric bisection; `hi` always stays feasible.
    let mut iterations = 0;
    while hi / lo - 1.0 > 4.0 * f64::EPSILON {
        let mid = libm::sqrt(lo * hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if consumption_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 500 {
            return Err(Error::NonConvergence { iterations });
        }
    }
    finish(problem, nbars_at(problem, hi)?, hi, false)
}

/// Solves each AoI class on its own; classes share nothing but the radio.
pub fn solve_classes(problems: &[OptProblem]) -> Result<Vec<OptResult>> {
    problems.iter().map(solve).collect()
}

/// Settings of the projected-gradient oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub max_iterations: usize,
    /// Converged once the objective improves by less than this over
    /// `window` iterations.
    pub improvement_tolerance: f64,
    pub window: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2_000_000,
            improvement_tolerance: 1e-10,
            window: 100,
        }
    }
}

/// Euclidean projection onto `{x >= 0, sum (x + e^-x) <= s}`.
///
/// For multiplier `mu` each coordinate solves `x - y + mu (1 - e^-x) = 0`;
/// the left side increases in `x`, so a safeguarded Newton step per
/// coordinate and a bisection on `mu` suffice.
fn project(y: &[f64], s: f64, out: &mut [f64]) {
    let consumption = |x: &[f64]| x.iter().map(|&v| v + libm::exp(-v)).sum::<f64>();
    let coordinate = |yc: f64, mu: f64| -> f64 {
        if yc <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, yc);
        let mut x = yc / (1.0 + mu);
        for _ in 0..100 {
            let e = libm::exp(-x);
            let g = x - yc + mu * (1.0 - e);
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let step = g / (1.0 + mu * e);
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x.max(1e-300) {
                return next;
            }
            x = next;
        }
        x
    };
    for (o, &yc) in out.iter_mut().zip(y) {
        *o = yc.max(0.0);
    }
    if consumption(out) <= s {
        return;
    }
    let mut mu_hi = 1.0;
    loop {
        for (o, &yc) in out.iter_mut().zip(y) {
            *o = coordinate(yc, mu_hi);
        }
        if consumption(out) <= s {
            break;
        }
        mu_hi *= 2.0;
    }
    let mut mu_lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (mu_lo + mu_hi);
        if mid <= mu_lo || mid >= mu_hi {
            break;
        }
        for (o, &yc) in out.iter_mut().zip(y) {
            *o = coordinate(yc, mid);
        }
        if consumption(out) > s {
            mu_lo = mid;
        } else {
            mu_hi = mid;
        }
    }
    for (o, &yc) in out.iter_mut().zip(y) {
        *o = coordinate(yc, mu_hi);
    }
}

fn objective_gradient(problem: &OptProblem, nbars: &[f64], grad: &mut [f64]) {
    for ((g, &lambda), &n) in grad.iter_mut().zip(&problem.arrival_rates).zip(nbars) {
        // d/dn (1 - e^-n)/n = -(1/n)(1/n - 1/(e^n - 1)) * (1 - e^-n)
        *g = if n > 0.0 {
            -stationarity_price(lambda, n) * (-libm::expm1(-n))
        } else {
            -0.5 * lambda
        };
    }
}

/// Projected gradient descent on the window-design problem, with step
/// halving on non-improving steps. Independent of [`solve`]; meant for
/// verification.
pub fn solve_oracle(problem: &OptProblem) -> Result<OptResult> {
    solve_oracle_with(problem, OracleSettings::default())
}

pub fn solve_oracle_with(problem: &OptProblem, settings: OracleSettings) -> Result<OptResult> {
    let floor = problem.rates.aoi_floor();
    if problem.aoi_budget < floor - BOUNDARY_TOLERANCE {
        return Err(infeasible(problem));
    }
    let s = budget(problem);
    let c = problem.item_count();
    let boundary = (problem.aoi_budget - floor).abs() <= BOUNDARY_TOLERANCE;
    if boundary {
        return finish(problem, alloc::vec![0.0; c], f64::NAN, true);
    }

    // Feasible start: spread the spare budget evenly, then project.
    let start = alloc::vec![(s - c as f64).max(0.0) / c as f64; c];
    let mut x = alloc::vec![0.0; c];
    project(&start, s, &mut x);
    let mut f = problem.objective(&x);
    let mut grad = alloc::vec![0.0; c];
    let mut trial_point = alloc::vec![0.0; c];
    let mut trial = alloc::vec![0.0; c];
    let mut step = 1.0 / problem.arrival_rates.iter().copied().fold(0.0, f64::max);
    let mut history: Vec<f64> = Vec::with_capacity(settings.window + 1);
    history.push(f);

    for _ in 0..settings.max_iterations {
        objective_gradient(problem, &x, &mut grad);
        let mut improved = false;
        for _ in 0..60 {
            for ((t, &xc), &g) in trial_point.iter_mut().zip(&x).zip(&grad) {
                *t = xc - step * g;
            }
            project(&trial_point, s, &mut trial);
            let ft = problem.objective(&trial);
            if ft < f {
                x.copy_from_slice(&trial);
                f = ft;
                step *= 1.5;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        history.push(f);
        if history.len() > settings.window {
            let old = history.remove(0);
            if old - f < settings.improvement_tolerance {
                let nu0 = dual_estimate(problem, &x);
                return finish(problem, x, nu0, false);
            }
        }
        if !improved {
            let nu0 = dual_estimate(problem, &x);
            return finish(problem, x, nu0, false);
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iterations,
    })
}

/// Median stationarity price over items with interior solutions.
fn dual_estimate(problem: &OptProblem, nbars: &[f64]) -> f64 {
    let mut prices: Vec<f64> = problem
        .arrival_rates
        .iter()
        .zip(nbars)
        .filter(|(_, &n)| n > 1e-10)
        .map(|(&lambda, &n)| stationarity_price(lambda, n))
        .collect();
    if prices.is_empty() {
        return f64::NAN;
    }
    prices.sort_by(f64::total_cmp);
    prices[prices.len() / 2]
}

/// Mean refresh probability implied by a set of `nbar` values.
pub fn mean_refresh_probability(problem: &OptProblem, nbars: &[f64]) -> f64 {
    problem
        .arrival_rates
        .iter()
        .zip(nbars)
        .map(|(&lambda, &n)| lambda * refresh_probability(n))
        .sum::<f64>()
        / problem.total_arrival_rate
}
