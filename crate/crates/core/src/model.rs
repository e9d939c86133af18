//! System parameters: radio configuration, service rates and request catalogs.

use alloc::vec::Vec;

use crate::error::{ensure_positive, Error, RateKind, Result};

/// Bits in one kilobyte when content sizes are given in KB (1 KB = 1024 bytes).
pub const BITS_PER_KILOBYTE: f64 = 8.0 * 1024.0;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, dbm / 10.0) / 1000.0
}

/// Physical-layer parameters of a single cell.
///
/// Users are spread uniformly over a disc of `coverage_radius`; the mean
/// delivery and fetch rates are the lower bounds obtained by moving the
/// expectation over the user position inside the logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    /// Cell radius in meters.
    pub coverage_radius: f64,
    /// Channel bandwidth in Hz.
    pub bandwidth: f64,
    /// Content size in bits.
    pub content_size: f64,
    /// Path-loss exponent.
    pub path_loss_exponent: f64,
    /// Noise power in watts.
    pub noise_power: f64,
    /// Base-station transmit power in watts.
    pub bs_tx_power: f64,
    /// Source-node transmit power in watts.
    pub source_tx_power: f64,
}

impl RadioConfig {
    /// Parameters of the reference cell: R = 1000 m, B = 10 MHz, L = 10 KB,
    /// path-loss exponent 4, noise -95 dBm, 1 W at the base station and
    /// 0.1 W at the sources.
    pub fn reference() -> Self {
        Self {
            coverage_radius: 1000.0,
            bandwidth: 10e6,
            content_size: 10.0 * BITS_PER_KILOBYTE,
            path_loss_exponent: 4.0,
            noise_power: dbm_to_watts(-95.0),
            bs_tx_power: 1.0,
            source_tx_power: 0.1,
        }
    }

    /// Checks every field and that both derived rates are positive.
    pub fn validate(&self) -> Result<()> {
        derive_service_rates(self).map(|_| ())
    }

    fn log_argument(&self, tx_power: f64) -> f64 {
        // Mean of ln r over the disc is ln R - 1/2, hence R / sqrt(e).
        let effective_distance = self.coverage_radius / libm::sqrt(core::f64::consts::E);
        tx_power * libm::pow(effective_distance, -self.path_loss_exponent) / self.noise_power
    }

    fn rate(&self, tx_power: f64, kind: RateKind) -> Result<f64> {
        let arg = self.log_argument(tx_power);
        if !(arg > 1.0) || !arg.is_finite() {
            return Err(Error::NonPositiveRate {
                kind,
                log_argument: arg,
            });
        }
        Ok(self.bandwidth / self.content_size * libm::log2(arg))
    }
}

/// Mean delivery and fetch rates of the base station, in items per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceRates {
    mu_d: f64,
    mu_r: f64,
    aoi_floor: f64,
}

impl ServiceRates {
    pub fn new(mu_d: f64, mu_r: f64) -> Result<Self> {
        let mu_d = ensure_positive("mu_d", mu_d)?;
        let mu_r = ensure_positive("mu_r", mu_r)?;
        Ok(Self {
            mu_d,
            mu_r,
            aoi_floor: 1.0 / mu_r + 1.0 / mu_d,
        })
    }

    /// Delivery rate (base station to user).
    pub fn mu_d(&self) -> f64 {
        self.mu_d
    }

    /// Fetch rate (source to base station).
    pub fn mu_r(&self) -> f64 {
        self.mu_r
    }

    /// `1/mu_r + 1/mu_d`: the mean age of a freshly fetched and delivered copy,
    /// and the smallest admissible refreshing window.
    pub fn aoi_floor(&self) -> f64 {
        self.aoi_floor
    }
}

/// Evaluates the mean delivery and fetch rates of a cell.
pub fn derive_service_rates(config: &RadioConfig) -> Result<ServiceRates> {
    ensure_positive("coverage_radius", config.coverage_radius)?;
    ensure_positive("bandwidth", config.bandwidth)?;
    ensure_positive("content_size", config.content_size)?;
    ensure_positive("path_loss_exponent", config.path_loss_exponent)?;
    ensure_positive("noise_power", config.noise_power)?;
    ensure_positive("bs_tx_power", config.bs_tx_power)?;
    ensure_positive("source_tx_power", config.source_tx_power)?;
    let mu_d = config.rate(config.bs_tx_power, RateKind::Delivery)?;
    let mu_r = config.rate(config.source_tx_power, RateKind::Fetch)?;
    ServiceRates::new(mu_d, mu_r)
}

/// Zipf popularity vector `q_c = c^-nu / sum_s s^-nu` for `c = 1..=item_count`.
pub fn zipf_popularities(item_count: usize, concentration: f64) -> Result<Vec<f64>> {
    if item_count == 0 {
        return Err(Error::InvalidParameter {
            name: "item_count",
            value: 0.0,
            reason: "must be at least 1",
        });
    }
    if !(concentration >= 0.0) || !concentration.is_finite() {
        return Err(Error::InvalidParameter {
            name: "zipf_concentration",
            value: concentration,
            reason: "must be finite and nonnegative",
        });
    }
    let weights: Vec<f64> = (1..=item_count)
        .map(|c| libm::pow(c as f64, -concentration))
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// One cached content item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalogItem {
    pub item_id: u32,
    /// Request probability `q_c`.
    pub popularity: f64,
    /// Refreshing window `W_c` in seconds.
    pub window: f64,
}

const POPULARITY_SUM_TOLERANCE: f64 = 1e-12;

/// The cached items together with the aggregate request rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    items: Vec<CatalogItem>,
    total_arrival_rate: f64,
}

impl Catalog {
    pub fn new(
        items: Vec<CatalogItem>,
        total_arrival_rate: f64,
        rates: &ServiceRates,
    ) -> Result<Self> {
        ensure_positive("total_arrival_rate", total_arrival_rate)?;
        if items.is_empty() {
            return Err(Error::InvalidParameter {
                name: "items",
                value: 0.0,
                reason: "catalog needs at least one item",
            });
        }
        let mut sum = 0.0;
        for item in &items {
            if !(item.popularity > 0.0 && item.popularity <= 1.0) {
                return Err(Error::InvalidParameter {
                    name: "popularity",
                    value: item.popularity,
                    reason: "must lie in (0, 1]",
                });
            }
            if !(item.window >= rates.aoi_floor()) || !item.window.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "window",
                    value: item.window,
                    reason: "must be finite and at least 1/mu_r + 1/mu_d",
                });
            }
            sum += item.popularity;
        }
        if (sum - 1.0).abs() > POPULARITY_SUM_TOLERANCE {
            return Err(Error::InvalidParameter {
                name: "popularity",
                value: sum,
                reason: "popularities must sum to 1",
            });
        }
        Ok(Self {
            items,
            total_arrival_rate,
        })
    }

    /// Items numbered `1..=popularities.len()` sharing one window.
    pub fn with_common_window(
        popularities: &[f64],
        window: f64,
        total_arrival_rate: f64,
        rates: &ServiceRates,
    ) -> Result<Self> {
        let items = popularities
            .iter()
            .zip(1u32..)
            .map(|(&popularity, item_id)| CatalogItem {
                item_id,
                popularity,
                window,
            })
            .collect();
        Self::new(items, total_arrival_rate, rates)
    }

    /// Items numbered `1..` with per-item windows.
    pub fn with_windows(
        popularities: &[f64],
        windows: &[f64],
        total_arrival_rate: f64,
        rates: &ServiceRates,
    ) -> Result<Self> {
        if popularities.len() != windows.len() {
            return Err(Error::InvalidParameter {
                name: "windows",
                value: windows.len() as f64,
                reason: "need exactly one window per item",
            });
        }
        let items = popularities
            .iter()
            .zip(windows)
            .zip(1u32..)
            .map(|((&popularity, &window), item_id)| CatalogItem {
                item_id,
                popularity,
                window,
            })
            .collect();
        Self::new(items, total_arrival_rate, rates)
    }

    pub fn items(&self) -> &[CatalogItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Aggregate request rate `Lambda`.
    pub fn total_arrival_rate(&self) -> f64 {
        self.total_arrival_rate
    }

    /// Per-item request rates `lambda_c = Lambda * q_c`.
    pub fn arrival_rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.items
            .iter()
            .map(move |item| item.popularity * self.total_arrival_rate)
    }
}
