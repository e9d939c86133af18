//! Scenario files: a flat, sectioned key/value format (TOML syntax).
//!
//! ```toml
//! [run]
//! name = "fig4"
//! command = "simulate"
//!
//! [rates]            # or a [radio] section
//! mu_d = 1000.0
//! mu_r = 1000.0
//!
//! [catalog]
//! item_count = 1
//! total_arrival_rate = 400.0
//! window = "1.2*floor"
//!
//! [simulation]
//! seed = 1
//! replications = 8
//!
//! [sweep]
//! parameter = "window"
//! values = ["1.2*floor", 0.005, 0.01]
//!
//! [series.light]
//! total_arrival_rate = 200.0
//! ```
//!
//! Quantities given in seconds (windows, AoI budgets) may also be written
//! as a multiple of the AoI floor, `"k*floor"`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use aoi_cache::desim::{
    Policy, DEFAULT_QUEUE_CAP, DEFAULT_REQUEST_BUDGET, DEFAULT_WARMUP_FRACTION,
};
use aoi_cache::model::{
    dbm_to_watts, derive_service_rates, zipf_popularities, Catalog, RadioConfig, ServiceRates,
    BITS_PER_KILOBYTE,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPLICATIONS: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] aoi_cache::Error),
}

fn invalid<T>(message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(message.into()))
}

/// A number, or a multiple of the AoI floor `1/mu_r + 1/mu_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuantity", into = "RawQuantity")]
pub enum Quantity {
    Value(f64),
    FloorMultiple(f64),
}

impl Quantity {
    pub fn resolve(self, floor: f64) -> f64 {
        match self {
            Quantity::Value(v) => v,
            Quantity::FloorMultiple(k) => k * floor,
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Value(v) => write!(f, "{v}"),
            Quantity::FloorMultiple(k) => write!(f, "{k}*floor"),
        }
    }
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "floor" {
            return Ok(Quantity::FloorMultiple(1.0));
        }
        if let Some(k) = s.strip_suffix("*floor") {
            return k
                .trim()
                .parse()
                .map(Quantity::FloorMultiple)
                .map_err(|_| format!("bad floor multiple `{s}`"));
        }
        s.parse()
            .map(Quantity::Value)
            .map_err(|_| format!("expected a number or `k*floor`, found `{s}`"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawQuantity {
    Number(f64),
    Text(String),
}

impl TryFrom<RawQuantity> for Quantity {
    type Error = String;

    fn try_from(raw: RawQuantity) -> Result<Self, Self::Error> {
        match raw {
            RawQuantity::Number(v) => Ok(Quantity::Value(v)),
            RawQuantity::Text(s) => s.parse(),
        }
    }
}

impl From<Quantity> for RawQuantity {
    fn from(q: Quantity) -> Self {
        match q {
            Quantity::Value(v) => RawQuantity::Number(v),
            q @ Quantity::FloorMultiple(_) => RawQuantity::Text(q.to_string()),
        }
    }
}

/// Serde adapter for [`Policy`] names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PolicyName(pub Policy);

impl TryFrom<String> for PolicyName {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
            .map(PolicyName)
            .map_err(|e| format!("unknown policy `{s}`: {e}"))
    }
}

impl From<PolicyName> for String {
    fn from(p: PolicyName) -> Self {
        p.0.name().to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Rates,
    Analyze,
    Simulate,
    Optimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Window,
    TotalArrivalRate,
    ItemCount,
    ZipfConcentration,
    AoiBudget,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Window => "window",
            SweepParam::TotalArrivalRate => "total_arrival_rate",
            SweepParam::ItemCount => "item_count",
            SweepParam::ZipfConcentration => "zipf_concentration",
            SweepParam::AoiBudget => "aoi_budget",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
}

impl RunSection {
    fn is_empty(&self) -> bool {
        self.name.is_none() && self.command.is_none()
    }
}

/// Radio parameters; anything left out takes the reference value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_size_kb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_size_bits: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_loss_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_tx_power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tx_power_w: Option<f64>,
}

impl RadioSection {
    pub fn config(&self) -> Result<RadioConfig, ScenarioError> {
        if self.content_size_kb.is_some() && self.content_size_bits.is_some() {
            return invalid("[radio]: give content_size_kb or content_size_bits, not both");
        }
        if self.noise_power_dbm.is_some() && self.noise_power_w.is_some() {
            return invalid("[radio]: give noise_power_dbm or noise_power_w, not both");
        }
        let r = RadioConfig::reference();
        Ok(RadioConfig {
            coverage_radius: self.coverage_radius.unwrap_or(r.coverage_radius),
            bandwidth: self.bandwidth.unwrap_or(r.bandwidth),
            content_size: self
                .content_size_bits
                .or(self.content_size_kb.map(|kb| kb * BITS_PER_KILOBYTE))
                .unwrap_or(r.content_size),
            path_loss_exponent: self.path_loss_exponent.unwrap_or(r.path_loss_exponent),
            noise_power: self
                .noise_power_w
                .or(self.noise_power_dbm.map(dbm_to_watts))
                .unwrap_or(r.noise_power),
            bs_tx_power: self.bs_tx_power_w.unwrap_or(r.bs_tx_power),
            source_tx_power: self.source_tx_power_w.unwrap_or(r.source_tx_power),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    pub mu_d: f64,
    pub mu_r: f64,
}

/// Either a Zipf catalog (`item_count`, `zipf_concentration`) or explicit
/// `popularities`; either one common `window` or per-item `windows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSection {
    pub total_arrival_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zipf_concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub popularities: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<Quantity>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParam,
    pub values: Vec<Quantity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub aoi_budget: Quantity,
}

/// Overrides applied on top of the base scenario for one named series.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_arrival_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zipf_concentration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aoi_budget: Option<Quantity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyName>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "RunSection::is_empty")]
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio: Option<RadioSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<CatalogSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub series: BTreeMap<String, SeriesSection>,
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub policy: Option<Policy>,
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSettings {
    pub seed: u64,
    pub request_budget: usize,
    pub warmup_fraction: f64,
    pub replications: usize,
    pub queue_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Popularity {
    Zipf {
        item_count: usize,
        concentration: f64,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
enum Windows {
    Common(Quantity),
    PerItem(Vec<Quantity>),
}

/// One point of the experiment grid: the base scenario with a series'
/// overrides and one sweep value applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub series: Option<String>,
    pub parameter: Option<SweepParam>,
    /// The sweep value in base units (seconds for windows and budgets).
    pub value: f64,
    pub rates: ServiceRates,
    pub catalog: Catalog,
    pub policy: Policy,
    pub aoi_budget: Option<f64>,
}

impl Point {
    /// The `sweep_param` CSV cell.
    pub fn label(&self) -> String {
        let param = self.parameter.map_or("none", SweepParam::name);
        match &self.series {
            Some(series) => format!("{param}@{series}"),
            None => param.to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
struct Settings {
    total_arrival_rate: f64,
    popularity: Popularity,
    windows: Windows,
    aoi_budget: Option<Quantity>,
    policy: Policy,
}

fn whole_number(param: SweepParam, q: Quantity) -> Result<usize, ScenarioError> {
    match q {
        Quantity::Value(v) if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
            Ok(v as usize)
        }
        _ => invalid(format!(
            "{} must be a positive whole number, got {q}",
            param.name()
        )),
    }
}

fn plain(param: SweepParam, q: Quantity) -> Result<f64, ScenarioError> {
    match q {
        Quantity::Value(v) => Ok(v),
        Quantity::FloorMultiple(_) => invalid(format!(
            "{} cannot be given as a floor multiple",
            param.name()
        )),
    }
}

impl Settings {
    fn set(&mut self, param: SweepParam, q: Quantity) -> Result<(), ScenarioError> {
        match param {
            SweepParam::Window => self.windows = Windows::Common(q),
            SweepParam::TotalArrivalRate => self.total_arrival_rate = plain(param, q)?,
            SweepParam::AoiBudget => self.aoi_budget = Some(q),
            SweepParam::ItemCount | SweepParam::ZipfConcentration => {
                let Popularity::Zipf {
                    item_count,
                    concentration,
                } = &mut self.popularity
                else {
                    return invalid(format!(
                        "{} needs a Zipf catalog, not explicit popularities",
                        param.name()
                    ));
                };
                if param == SweepParam::ItemCount {
                    *item_count = whole_number(param, q)?;
                } else {
                    *concentration = plain(param, q)?;
                }
            }
        }
        Ok(())
    }

    fn apply_series(&mut self, s: &SeriesSection) -> Result<(), ScenarioError> {
        if let Some(w) = s.window {
            self.set(SweepParam::Window, w)?;
        }
        if let Some(l) = s.total_arrival_rate {
            self.set(SweepParam::TotalArrivalRate, Quantity::Value(l))?;
        }
        if let Some(c) = s.item_count {
            self.set(SweepParam::ItemCount, Quantity::Value(c as f64))?;
        }
        if let Some(nu) = s.zipf_concentration {
            self.set(SweepParam::ZipfConcentration, Quantity::Value(nu))?;
        }
        if let Some(b) = s.aoi_budget {
            self.set(SweepParam::AoiBudget, b)?;
        }
        if let Some(p) = s.policy {
            self.policy = p.0;
        }
        Ok(())
    }

    fn catalog(&self, rates: &ServiceRates) -> Result<Catalog, ScenarioError> {
        let floor = rates.aoi_floor();
        let popularities = match &self.popularity {
            Popularity::Zipf {
                item_count,
                concentration,
            } => zipf_popularities(*item_count, *concentration)?,
            Popularity::Explicit(q) => q.clone(),
        };
        let catalog = match &self.windows {
            Windows::Common(w) => Catalog::with_common_window(
                &popularities,
                w.resolve(floor),
                self.total_arrival_rate,
                rates,
            )?,
            Windows::PerItem(ws) => {
                let ws: Vec<f64> = ws.iter().map(|w| w.resolve(floor)).collect();
                Catalog::with_windows(&popularities, &ws, self.total_arrival_rate, rates)?
            }
        };
        Ok(catalog)
    }
}

/// Maps a TOML byte offset to a 1-based line number.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Scenario {
    /// Parses and validates a scenario file.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().trim().to_owned(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// The canonical text form; [`Scenario::parse`] reads it back unchanged.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("scenario values are always representable")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match (&self.radio, &self.rates) {
            (Some(_), Some(_)) => return invalid("give either [radio] or [rates], not both"),
            (None, None) => return invalid("missing [radio] or [rates] section"),
            _ => {}
        }
        if let Some(radio) = &self.radio {
            radio.config()?;
        }
        if let Some(c) = &self.catalog {
            if c.popularities.is_some()
                && (c.item_count.is_some() || c.zipf_concentration.is_some())
            {
                return invalid(
                    "[catalog]: popularities excludes item_count and zipf_concentration",
                );
            }
            if c.window.is_some() && c.windows.is_some() {
                return invalid("[catalog]: give window or windows, not both");
            }
        }
        if let Some(sim) = &self.simulation {
            if let Some(seed) = sim.seed {
                if i64::try_from(seed).is_err() {
                    return invalid("[simulation]: seed must be below 2^63");
                }
            }
            if sim.replications == Some(0) {
                return invalid("[simulation]: replications must be at least 1");
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return invalid("[sweep]: values must not be empty");
            }
        }
        for name in self.series.keys() {
            if name.is_empty() || name.contains(['@', ',', '"']) {
                return invalid(format!(
                    "series name `{name}` may not contain @ , or quotes"
                ));
            }
        }
        Ok(())
    }

    /// Folds command-line overrides into the `[simulation]` section.
    pub fn apply_overrides(&mut self, o: &Overrides) {
        if o.seed.is_none() && o.replications.is_none() && o.policy.is_none() {
            return;
        }
        let sim = self.simulation.get_or_insert_with(Default::default);
        if let Some(seed) = o.seed {
            sim.seed = Some(seed);
        }
        if let Some(r) = o.replications {
            sim.replications = Some(r);
        }
        if let Some(p) = o.policy {
            sim.policy = Some(PolicyName(p));
        }
    }

    pub fn service_rates(&self) -> Result<ServiceRates, ScenarioError> {
        match (&self.radio, &self.rates) {
            (Some(radio), None) => Ok(derive_service_rates(&radio.config()?)?),
            (None, Some(r)) => Ok(ServiceRates::new(r.mu_d, r.mu_r)?),
            _ => invalid("give exactly one of [radio] or [rates]"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.simulation
            .as_ref()
            .and_then(|s| s.seed)
            .unwrap_or(DEFAULT_SEED)
    }

    pub fn sim_settings(&self) -> SimSettings {
        let s = self.simulation.clone().unwrap_or_default();
        SimSettings {
            seed: self.seed(),
            request_budget: s.request_budget.unwrap_or(DEFAULT_REQUEST_BUDGET),
            warmup_fraction: s.warmup_fraction.unwrap_or(DEFAULT_WARMUP_FRACTION),
            replications: s.replications.unwrap_or(DEFAULT_REPLICATIONS),
            queue_cap: s.queue_cap.unwrap_or(DEFAULT_QUEUE_CAP),
        }
    }

    fn base_settings(&self) -> Result<Settings, ScenarioError> {
        let Some(c) = &self.catalog else {
            return invalid("missing [catalog] section");
        };
        let popularity = match &c.popularities {
            Some(q) => Popularity::Explicit(q.clone()),
            None => Popularity::Zipf {
                item_count: c.item_count.unwrap_or(1),
                concentration: c.zipf_concentration.unwrap_or(0.0),
            },
        };
        let windows = match (&c.window, &c.windows) {
            (_, Some(ws)) => Windows::PerItem(ws.clone()),
            (Some(w), None) => Windows::Common(*w),
            (None, None) => Windows::Common(Quantity::FloorMultiple(1.0)),
        };
        Ok(Settings {
            total_arrival_rate: c.total_arrival_rate,
            popularity,
            windows,
            aoi_budget: self.optimize.map(|o| o.aoi_budget),
            policy: self
                .simulation
                .as_ref()
                .and_then(|s| s.policy)
                .map_or(Policy::default(), |p| p.0),
        })
    }

    /// Every point of the grid, series-major then in sweep order.
    pub fn points(&self) -> Result<Vec<Point>, ScenarioError> {
        let rates = self.service_rates()?;
        let floor = rates.aoi_floor();
        let base = self.base_settings()?;
        let series: Vec<(Option<&String>, Option<&SeriesSection>)> = if self.series.is_empty() {
            vec![(None, None)]
        } else {
            self.series
                .iter()
                .map(|(n, s)| (Some(n), Some(s)))
                .collect()
        };
        let sweep: Vec<Option<Quantity>> = match &self.sweep {
            Some(s) => s.values.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut points = Vec::with_capacity(series.len() * sweep.len());
        for (name, overrides) in series {
            let mut settings = base.clone();
            if let Some(o) = overrides {
                settings.apply_series(o)?;
            }
            for value in &sweep {
                let mut s = settings.clone();
                let (parameter, value) = match (value, &self.sweep) {
                    (Some(v), Some(sweep)) => {
                        s.set(sweep.parameter, *v)?;
                        (Some(sweep.parameter), v.resolve(floor))
                    }
                    _ => (None, 0.0),
                };
                points.push(Point {
                    series: name.cloned(),
                    parameter,
                    value,
                    rates,
                    catalog: s.catalog(&rates)?,
                    policy: s.policy,
                    aoi_budget: s.aoi_budget.map(|b| b.resolve(floor)),
                });
            }
        }
        Ok(points)
    }
}
