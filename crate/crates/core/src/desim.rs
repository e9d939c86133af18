//! Seeded simulation of the base-station service process.
//!
//! Requests arrive as a Poisson stream of rate `Lambda`, pick an item by
//! popularity and queue FIFO for a single server. When a request reaches
//! the server the age of the cached copy is checked against the item's
//! window; a refresh fetches a new version (exponential with rate `mu_r`)
//! that is timestamped at the instant the fetch starts, and every request
//! then takes an exponential delivery time with rate `mu_d`.
//!
//! With one FIFO server, service starts and departures happen in arrival
//! order, so requests are processed one at a time in that order; the cache
//! state seen by each service start is exactly the state left by the
//! previous departure.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::{Catalog, ServiceRates};

pub const DEFAULT_REQUEST_BUDGET: usize = 100_000;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;
pub const DEFAULT_QUEUE_CAP: usize = 10_000_000;

/// Two-sided 95% standard-normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

const ARRIVAL_STREAM: u64 = 0;
const ITEM_STREAM: u64 = 1;
const SERVICE_STREAM: u64 = 2;

/// How the base station decides whether to fetch before delivering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Policy {
    /// Refresh iff the cached copy's age has reached the item's window.
    #[default]
    FreshnessWindow,
    /// Refresh on every request (eager refreshing).
    AlwaysRefresh,
    /// Never refresh once an item has been fetched for the first time.
    NeverRefresh,
}

impl Policy {
    pub const ALL: [Policy; 3] = [
        Policy::FreshnessWindow,
        Policy::AlwaysRefresh,
        Policy::NeverRefresh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::FreshnessWindow => "freshness_window",
            Policy::AlwaysRefresh => "always_refresh",
            Policy::NeverRefresh => "never_refresh",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownPolicy;

impl fmt::Display for UnknownPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("expected one of freshness_window, always_refresh, never_refresh")
    }
}

impl core::error::Error for UnknownPolicy {}

impl FromStr for Policy {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or(UnknownPolicy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub rates: ServiceRates,
    pub catalog: Catalog,
    /// Completed requests recorded after warmup.
    pub request_budget: usize,
    /// Warmup length as a fraction of `request_budget`; those completions
    /// are simulated first and discarded.
    pub warmup_fraction: f64,
    pub policy: Policy,
    /// Largest number of requests allowed in the system at an arrival.
    pub queue_cap: usize,
}

impl SimConfig {
    pub fn new(seed: u64, rates: ServiceRates, catalog: Catalog) -> Self {
        Self {
            seed,
            rates,
            catalog,
            request_budget: DEFAULT_REQUEST_BUDGET,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            policy: Policy::FreshnessWindow,
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.request_budget == 0 {
            return Err(Error::InvalidParameter {
                name: "request_budget",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidParameter {
                name: "warmup_fraction",
                value: self.warmup_fraction,
                reason: "must lie in [0, 1)",
            });
        }
        if self.queue_cap == 0 {
            return Err(Error::InvalidParameter {
                name: "queue_cap",
                value: 0.0,
                reason: "must be at least 1",
            });
        }
        if let Some(item) = self
            .catalog
            .items()
            .iter()
            .find(|item| item.window < self.rates.aoi_floor())
        {
            return Err(Error::InvalidParameter {
                name: "window",
                value: item.window,
                reason: "catalog window below the floor of these service rates",
            });
        }
        Ok(())
    }

    /// Number of discarded warmup completions.
    pub fn warmup_requests(&self) -> usize {
        libm::ceil(self.warmup_fraction * self.request_budget as f64) as usize
    }
}

/// One served request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestRecord {
    pub item_id: u32,
    pub arrival_time: f64,
    pub service_start: f64,
    pub departure_time: f64,
    pub refreshed: bool,
    /// Zero when not refreshed.
    pub fetch_time: f64,
    pub delivery_time: f64,
    /// Age of the cached copy when service started; `None` before the
    /// item's first fetch.
    pub aoi_at_service_start: Option<f64>,
    pub aoi_at_delivery: f64,
    pub delay: f64,
}

/// A point estimate with its uncertainty: the standard error for a single
/// run, the 95% confidence half-width for pooled replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemSummary {
    /// `0` for the system aggregate.
    pub item_id: u32,
    pub count: u64,
    pub refresh_fraction: Estimate,
    pub mean_aoi: Estimate,
    pub mean_delay: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub policy: Policy,
    /// Number of pooled runs; 1 for a single simulation.
    pub replications: usize,
    /// Simulated seconds, summed over replications.
    pub simulated_time: f64,
    pub items: Vec<ItemSummary>,
    pub aggregate: ItemSummary,
}

impl SimReport {
    pub fn recorded_requests(&self) -> u64 {
        self.aggregate.count
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    refreshed: u64,
    aoi_sum: f64,
    aoi_sq: f64,
    delay_sum: f64,
    delay_sq: f64,
}

impl Moments {
    fn push(&mut self, record: &RequestRecord) {
        self.count += 1;
        self.refreshed += u64::from(record.refreshed);
        self.aoi_sum += record.aoi_at_delivery;
        self.aoi_sq += record.aoi_at_delivery * record.aoi_at_delivery;
        self.delay_sum += record.delay;
        self.delay_sq += record.delay * record.delay;
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.refreshed += other.refreshed;
        self.aoi_sum += other.aoi_sum;
        self.aoi_sq += other.aoi_sq;
        self.delay_sum += other.delay_sum;
        self.delay_sq += other.delay_sq;
    }

    fn summary(&self, item_id: u32) -> ItemSummary {
        let n = self.count as f64;
        let estimate = |sum: f64, sq: f64| {
            if self.count == 0 {
                return Estimate {
                    mean: f64::NAN,
                    uncertainty: f64::NAN,
                };
            }
            let mean = sum / n;
            let uncertainty = if self.count < 2 {
                f64::NAN
            } else {
                let var = ((sq - n * mean * mean) / (n - 1.0)).max(0.0);
                libm::sqrt(var / n)
            };
            Estimate { mean, uncertainty }
        };
        let r = self.refreshed as f64;
        ItemSummary {
            item_id,
            count: self.count,
            refresh_fraction: estimate(r, r),
            mean_aoi: estimate(self.aoi_sum, self.aoi_sq),
            mean_delay: estimate(self.delay_sum, self.delay_sq),
        }
    }
}

fn rate_err<E>(name: &'static str) -> impl Fn(E) -> Error {
    move |_| Error::InvalidParameter {
        name,
        value: f64::NAN,
        reason: "cannot build sampling distribution",
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs one simulation.
pub fn run_simulation(config: &SimConfig) -> Result<SimReport> {
    run_simulation_observed(config, |_| {})
}

/// Runs one simulation, handing every recorded request to `observer`.
pub fn run_simulation_observed(
    config: &SimConfig,
    mut observer: impl FnMut(&RequestRecord),
) -> Result<SimReport> {
    config.validate()?;
    let catalog = &config.catalog;
    let items = catalog.items();
    let interarrival =
        Exp::new(catalog.total_arrival_rate()).map_err(rate_err("total_arrival_rate"))?;
    let fetch = Exp::new(config.rates.mu_r()).map_err(rate_err("mu_r"))?;
    let delivery = Exp::new(config.rates.mu_d()).map_err(rate_err("mu_d"))?;
    let chooser = WeightedAliasIndex::new(items.iter().map(|i| i.popularity).collect())
        .map_err(rate_err("popularity"))?;

    let mut arrivals = stream(config.seed, ARRIVAL_STREAM);
    let mut picks = stream(config.seed, ITEM_STREAM);
    let mut service = stream(config.seed, SERVICE_STREAM);

    let warmup = config.warmup_requests();
    let total = warmup + config.request_budget;

    // Departure times of requests still in the system, oldest first.
    let mut in_system: VecDeque<f64> = VecDeque::new();
    let mut versions: Vec<Option<f64>> = alloc::vec![None; items.len()];
    let mut per_item = alloc::vec![Moments::default(); items.len()];
    let mut clock = 0.0_f64;
    let mut last_departure = 0.0_f64;

    for k in 0..total {
        clock += interarrival.sample(&mut arrivals);
        while in_system.front().is_some_and(|&d| d <= clock) {
            in_system.pop_front();
        }
        if in_system.len() >= config.queue_cap {
            return Err(Error::QueueDivergence {
                queue_length: in_system.len() + 1,
                cap: config.queue_cap,
                replication: None,
            });
        }
        let index = chooser.sample(&mut picks);
        let item = &items[index];

        let start = clock.max(last_departure);
        let age = versions[index].map(|generated| start - generated);
        let refreshed = match (config.policy, age) {
            (_, None) => true,
            (Policy::FreshnessWindow, Some(age)) => age >= item.window,
            (Policy::AlwaysRefresh, Some(_)) => true,
            (Policy::NeverRefresh, Some(_)) => false,
        };
        let fetch_time = if refreshed {
            versions[index] = Some(start);
            fetch.sample(&mut service)
        } else {
            0.0
        };
        let delivery_time = delivery.sample(&mut service);
        let departure = start + fetch_time + delivery_time;
        in_system.push_back(departure);
        last_departure = departure;

        if k >= warmup {
            let record = RequestRecord {
                item_id: item.item_id,
                arrival_time: clock,
                service_start: start,
                departure_time: departure,
                refreshed,
                fetch_time,
                delivery_time,
                aoi_at_service_start: age,
                aoi_at_delivery: if refreshed {
                    fetch_time + delivery_time
                } else {
                    departure - versions[index].unwrap_or(start)
                },
                delay: departure - clock,
            };
            per_item[index].push(&record);
            observer(&record);
        }
    }

    let mut all = Moments::default();
    for m in &per_item {
        all.merge(m);
    }
    Ok(SimReport {
        policy: config.policy,
        replications: 1,
        simulated_time: last_departure,
        items: per_item
            .iter()
            .zip(items)
            .map(|(m, item)| m.summary(item.item_id))
            .collect(),
        aggregate: all.summary(0),
    })
}

/// SplitMix64 finalizer applied to `base + (index + 1) * golden gamma`.
///
/// For a fixed base the map from index to seed is a bijection on `u64`, so
/// distinct indices always give distinct seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replication_seeds(base: u64, replications: usize) -> Vec<u64> {
    (0..replications as u64)
        .map(|i| derive_seed(base, i))
        .collect()
}

fn pool_estimates(parts: &[(u64, Estimate)]) -> Estimate {
    let used: Vec<&(u64, Estimate)> = parts.iter().filter(|(n, _)| *n > 0).collect();
    let count: u64 = used.iter().map(|(n, _)| n).sum();
    if count == 0 {
        return Estimate {
            mean: f64::NAN,
            uncertainty: f64::NAN,
        };
    }
    let mean = used.iter().map(|(n, e)| *n as f64 * e.mean).sum::<f64>() / count as f64;
    let r = used.len() as f64;
    let uncertainty = if used.len() < 2 {
        f64::NAN
    } else {
        let centre = used.iter().map(|(_, e)| e.mean).sum::<f64>() / r;
        let var = used
            .iter()
            .map(|(_, e)| (e.mean - centre) * (e.mean - centre))
            .sum::<f64>()
            / (r - 1.0);
        Z_95 * libm::sqrt(var / r)
    };
    Estimate { mean, uncertainty }
}

fn pool_summaries(summaries: &[&ItemSummary]) -> ItemSummary {
    let pick = |f: fn(&ItemSummary) -> Estimate| -> Vec<(u64, Estimate)> {
        summaries.iter().map(|s| (s.count, f(s))).collect()
    };
    ItemSummary {
        item_id: summaries[0].item_id,
        count: summaries.iter().map(|s| s.count).sum(),
        refresh_fraction: pool_estimates(&pick(|s| s.refresh_fraction)),
        mean_aoi: pool_estimates(&pick(|s| s.mean_aoi)),
        mean_delay: pool_estimates(&pick(|s| s.mean_delay)),
    }
}

/// Pools independent runs of the same scenario.
///
/// Means are count-weighted averages of the per-run means; uncertainties are
/// 95% normal-approximation half-widths from the spread of the run means.
///
/// # Panics
///
/// If `reports` is empty or the runs disagree on the item set.
pub fn pool_reports(reports: &[SimReport]) -> SimReport {
    assert!(!reports.is_empty(), "nothing to pool");
    let first = &reports[0];
    let items = (0..first.items.len())
        .map(|i| {
            let column: Vec<&ItemSummary> = reports.iter().map(|r| &r.items[i]).collect();
            assert!(column.iter().all(|s| s.item_id == column[0].item_id));
            pool_summaries(&column)
        })
        .collect();
    let aggregates: Vec<&ItemSummary> = reports.iter().map(|r| &r.aggregate).collect();
    SimReport {
        policy: first.policy,
        replications: reports.iter().map(|r| r.replications).sum(),
        simulated_time: reports.iter().map(|r| r.simulated_time).sum(),
        items,
        aggregate: pool_summaries(&aggregates),
    }
}

/// Runs `replications` independent copies with seeds derived from
/// `config.seed` and pools them.
pub fn replicate(config: &SimConfig, replications: usize) -> Result<SimReport> {
    if replications < 2 {
        return Err(Error::InvalidParameter {
            name: "replications",
            value: replications as f64,
            reason: "need at least 2 replications for a confidence interval",
        });
    }
    let mut reports = Vec::with_capacity(replications);
    for (index, seed) in replication_seeds(config.seed, replications)
        .into_iter()
        .enumerate()
    {
        let run = SimConfig {
            seed,
            ..config.clone()
        };
        reports.push(run_simulation(&run).map_err(|e| tag_replication(e, index))?);
    }
    Ok(pool_reports(&reports))
}

/// Attaches a replication index to a queue divergence.
pub fn tag_replication(error: Error, index: usize) -> Error {
    match error {
        Error::QueueDivergence {
            queue_length, cap, ..
        } => Error::QueueDivergence {
            queue_length,
            cap,
            replication: Some(index),
        },
        other => other,
    }
}
