//! The subcommands, as library functions returning tables and a summary.

use std::fmt::Write as _;

use aoi_cache::analytics::{delay_bounds, multi_source_evaluate, MultiPrediction};
use aoi_cache::desim::{
    pool_reports, replication_seeds, run_simulation, tag_replication, ItemSummary, Policy,
    SimConfig, SimReport,
};
use aoi_cache::model::{Catalog, ServiceRates};
use aoi_cache::optimizer::{solve, OptProblem, OptResult};
use aoi_cache::Error;
use rayon::prelude::*;

use crate::scenario::{Command, Point, Scenario, ScenarioError, SimSettings};
use crate::table::{
    cell, opt_cell, Table, ANALYZE_COLUMNS, MISSING, OPTIMIZE_COLUMNS, SIMULATE_COLUMNS,
};

/// What a command produced: a CSV table (absent for `rates`) and a
/// human-readable summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Option<Table>,
    pub summary: String,
}

pub fn run(command: Command, scenario: &Scenario) -> Result<Outcome, ScenarioError> {
    match command {
        Command::Rates => rates(scenario),
        Command::Analyze => analyze(scenario),
        Command::Simulate => simulate(scenario),
        Command::Optimize => optimize(scenario),
    }
}

pub fn rates(scenario: &Scenario) -> Result<Outcome, ScenarioError> {
    let r = scenario.service_rates()?;
    let mut s = String::new();
    writeln!(
        s,
        "mu_d       {} /s  (mean delivery {} ms)",
        r.mu_d(),
        1e3 / r.mu_d()
    )
    .unwrap();
    writeln!(
        s,
        "mu_r       {} /s  (mean fetch {} ms)",
        r.mu_r(),
        1e3 / r.mu_r()
    )
    .unwrap();
    writeln!(
        s,
        "aoi_floor  {} s  ({} ms)",
        r.aoi_floor(),
        1e3 * r.aoi_floor()
    )
    .unwrap();
    Ok(Outcome {
        table: None,
        summary: s,
    })
}

/// Closed-form prediction under `policy`.
///
/// Eager refreshing is the window policy with every window at the floor
/// (`p = 1`). Never refreshing serves every request from the cache
/// (`p = 0`); its AoI grows without bound and is reported as missing.
pub fn predict(catalog: &Catalog, rates: &ServiceRates, policy: Policy) -> MultiPrediction {
    if policy == Policy::FreshnessWindow {
        return multi_source_evaluate(catalog, rates);
    }
    let popularities: Vec<f64> = catalog.items().iter().map(|i| i.popularity).collect();
    let at_floor = Catalog::with_common_window(
        &popularities,
        rates.aoi_floor(),
        catalog.total_arrival_rate(),
        rates,
    )
    .expect("a valid catalog stays valid at the floor window");
    let mut pred = multi_source_evaluate(&at_floor, rates);
    if policy == Policy::NeverRefresh {
        let delay = delay_bounds(rates, catalog.total_arrival_rate()).min;
        let moments = aoi_cache::analytics::service_time_moments(0.0, rates);
        for p in pred.items.iter_mut().chain([&mut pred.system]) {
            p.nbar = f64::INFINITY;
            p.refresh_probability = 0.0;
            p.refresh_frequency = 0.0;
            p.mean_aoi = f64::INFINITY;
            p.mean_delay = delay;
            p.service_time_mean = moments.mean;
            p.service_time_variance = moments.variance;
        }
    }
    pred
}

fn delay_cell(p: &MultiPrediction) -> String {
    opt_cell(p.system.mean_delay.finite())
}

fn analytic_status(p: &MultiPrediction) -> &'static str {
    if p.is_stable() {
        "ok"
    } else {
        "unstable"
    }
}

pub fn analyze(scenario: &Scenario) -> Result<Outcome, ScenarioError> {
    let points = scenario.points()?;
    let mut table = Table::new(ANALYZE_COLUMNS);
    let mut summary = String::new();
    for point in &points {
        let pred = predict(&point.catalog, &point.rates, point.policy);
        let bounds = delay_bounds(&point.rates, point.catalog.total_arrival_rate());
        let (d_min, d_max) = (bounds.min.finite(), bounds.max.finite());
        let status = analytic_status(&pred);
        let rows = pred
            .items
            .iter()
            .zip(point.catalog.items())
            .map(|(p, item)| (item.item_id, p))
            .chain((pred.items.len() > 1).then_some((0, &pred.system)));
        for (item_id, p) in rows {
            table.push(vec![
                point.label(),
                cell(point.value),
                item_id.to_string(),
                cell(p.refresh_probability),
                cell(p.refresh_frequency),
                cell(p.mean_aoi),
                delay_cell(&pred),
                opt_cell(d_min),
                opt_cell(d_max),
                status.to_owned(),
            ]);
        }
        let ratio = match (d_min, d_max) {
            (Some(lo), Some(hi)) => cell(lo / hi),
            _ => MISSING.to_owned(),
        };
        writeln!(
            summary,
            "{} = {}: P = {:.6}  AoI = {:.6} s  delay = {} s  d_min/d_max = {}  [{}]",
            point.label(),
            cell(point.value),
            pred.system.refresh_probability,
            pred.system.mean_aoi,
            delay_cell(&pred),
            ratio,
            status,
        )
        .unwrap();
    }
    Ok(Outcome {
        table: Some(table),
        summary,
    })
}

/// Pooled result of one grid point, or the divergence that stopped it.
#[derive(Debug, Clone)]
pub enum SimOutcome {
    Done(SimReport),
    Diverged(Error),
}

impl SimOutcome {
    pub fn report(&self) -> Option<&SimReport> {
        match self {
            SimOutcome::Done(r) => Some(r),
            SimOutcome::Diverged(_) => None,
        }
    }
}

fn sim_config(settings: &SimSettings, point: &Point, catalog: Catalog) -> SimConfig {
    SimConfig {
        request_budget: settings.request_budget,
        warmup_fraction: settings.warmup_fraction,
        policy: point.policy,
        queue_cap: settings.queue_cap,
        ..SimConfig::new(settings.seed, point.rates, catalog)
    }
}

/// Runs every replication of every configuration in parallel and pools
/// them per configuration, in input order.
///
/// Replication `k` uses the same seed at every configuration, so the grid
/// shares common random numbers. With two or more replications the seeds
/// match [`aoi_cache::desim::replicate`].
pub fn simulate_configs(
    configs: &[SimConfig],
    replications: usize,
) -> Result<Vec<SimOutcome>, ScenarioError> {
    let r = replications.max(1);
    let seeds: Vec<Vec<u64>> = configs
        .iter()
        .map(|c| {
            if r == 1 {
                vec![c.seed]
            } else {
                replication_seeds(c.seed, r)
            }
        })
        .collect();
    let runs: Vec<Result<SimReport, Error>> = (0..configs.len() * r)
        .into_par_iter()
        .map(|job| {
            let (i, k) = (job / r, job % r);
            let config = SimConfig {
                seed: seeds[i][k],
                ..configs[i].clone()
            };
            run_simulation(&config).map_err(|e| tag_replication(e, k))
        })
        .collect();
    let mut outcomes = Vec::with_capacity(configs.len());
    for chunk in runs.chunks(r) {
        let mut reports = Vec::with_capacity(r);
        let mut diverged = None;
        for run in chunk {
            match run {
                Ok(report) => reports.push(report.clone()),
                Err(e @ Error::QueueDivergence { .. }) => {
                    diverged.get_or_insert_with(|| e.clone());
                }
                Err(e) => return Err(e.clone().into()),
            }
        }
        outcomes.push(match diverged {
            Some(e) => SimOutcome::Diverged(e),
            None if r == 1 => SimOutcome::Done(reports.pop().expect("one run")),
            None => SimOutcome::Done(pool_reports(&reports)),
        });
    }
    Ok(outcomes)
}

/// The six simulated cells; half-widths are only defined when pooled.
fn sim_cells(summary: Option<&ItemSummary>, pooled: bool) -> [String; 6] {
    let Some(s) = summary else {
        return std::array::from_fn(|_| MISSING.to_owned());
    };
    let hw = |u: f64| if pooled { cell(u) } else { MISSING.to_owned() };
    [
        cell(s.refresh_fraction.mean),
        hw(s.refresh_fraction.uncertainty),
        cell(s.mean_aoi.mean),
        hw(s.mean_aoi.uncertainty),
        cell(s.mean_delay.mean),
        hw(s.mean_delay.uncertainty),
    ]
}

fn sim_status(base: &'static str, outcome: Option<&SimOutcome>) -> &'static str {
    match outcome {
        Some(SimOutcome::Diverged(_)) => "queue_divergence",
        _ => base,
    }
}

pub fn simulate(scenario: &Scenario) -> Result<Outcome, ScenarioError> {
    let points = scenario.points()?;
    let settings = scenario.sim_settings();
    let configs: Vec<SimConfig> = points
        .iter()
        .map(|p| sim_config(&settings, p, p.catalog.clone()))
        .collect();
    let outcomes = simulate_configs(&configs, settings.replications)?;
    let pooled = settings.replications >= 2;
    let mut table = Table::new(SIMULATE_COLUMNS);
    let mut summary = String::new();
    for (point, outcome) in points.iter().zip(&outcomes) {
        let pred = predict(&point.catalog, &point.rates, point.policy);
        let status = sim_status(analytic_status(&pred), Some(outcome));
        let report = outcome.report();
        let mut rows: Vec<(u32, _, Option<&ItemSummary>)> = pred
            .items
            .iter()
            .enumerate()
            .map(|(i, p)| {
                (
                    point.catalog.items()[i].item_id,
                    p,
                    report.map(|r| &r.items[i]),
                )
            })
            .collect();
        if pred.items.len() > 1 {
            rows.push((0, &pred.system, report.map(|r| &r.aggregate)));
        }
        for (item_id, p, s) in rows {
            let mut row = vec![
                point.label(),
                cell(point.value),
                item_id.to_string(),
                cell(p.refresh_probability),
                cell(p.refresh_frequency),
                cell(p.mean_aoi),
                delay_cell(&pred),
            ];
            row.extend(sim_cells(s, pooled));
            row.push(status.to_owned());
            table.push(row);
        }
        let sim = sim_cells(report.map(|r| &r.aggregate), pooled);
        writeln!(
            summary,
            "{} = {} [{}]: P {:.4} / {}  AoI {:.6} / {} s  delay {} / {} s  (analytic / simulated)",
            point.label(),
            cell(point.value),
            point.policy,
            pred.system.refresh_probability,
            sim[0],
            pred.system.mean_aoi,
            sim[2],
            delay_cell(&pred),
            sim[4],
        )
        .unwrap();
        if let SimOutcome::Diverged(e) = outcome {
            writeln!(summary, "  {e}").unwrap();
        }
    }
    Ok(Outcome {
        table: Some(table),
        summary,
    })
}

/// One optimized grid point.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub problem: OptProblem,
    /// `Err` carries an infeasible budget.
    pub result: Result<OptResult, Error>,
}

pub fn optimize_points(points: &[Point]) -> Result<Vec<Optimized>, ScenarioError> {
    points
        .iter()
        .map(|point| {
            let Some(aoi_budget) = point.aoi_budget else {
                return Err(ScenarioError::Invalid(
                    "optimize needs an [optimize] aoi_budget".into(),
                ));
            };
            let problem = OptProblem::new(
                point.catalog.arrival_rates().collect(),
                point.rates,
                aoi_budget,
            )?;
            let result = match solve(&problem) {
                Err(e @ Error::InfeasibleBudget { .. }) => Err(e),
                other => Ok(other?),
            };
            Ok(Optimized { problem, result })
        })
        .collect()
}

pub fn optimize(scenario: &Scenario) -> Result<Outcome, ScenarioError> {
    let points = scenario.points()?;
    let solved = optimize_points(&points)?;
    let settings = scenario.sim_settings();

    // Simulate only when asked to, and only where a solution exists.
    let mut configs = Vec::new();
    let mut slots = Vec::with_capacity(solved.len());
    for (point, opt) in points.iter().zip(&solved) {
        let slot = match (&scenario.simulation, &opt.result) {
            (Some(_), Ok(res)) => {
                configs.push(sim_config(
                    &settings,
                    point,
                    opt.problem.catalog(&res.windows)?,
                ));
                Some(configs.len() - 1)
            }
            _ => None,
        };
        slots.push(slot);
    }
    let outcomes = simulate_configs(&configs, settings.replications)?;
    let pooled = settings.replications >= 2;

    let mut table = Table::new(OPTIMIZE_COLUMNS);
    let mut summary = String::new();
    for ((point, opt), slot) in points.iter().zip(&solved).zip(slots) {
        let outcome = slot.map(|i| &outcomes[i]);
        let report = outcome.and_then(SimOutcome::report);
        let total = opt.problem.total_arrival_rate();
        let res = match &opt.result {
            Ok(res) => res,
            Err(e) => {
                let mut row = vec![point.label(), cell(point.value), "0".into(), cell(total)];
                row.resize(OPTIMIZE_COLUMNS.len() - 1, MISSING.to_owned());
                row.push("infeasible_budget".into());
                table.push(row);
                writeln!(summary, "{} = {}: {e}", point.label(), cell(point.value)).unwrap();
                continue;
            }
        };
        let pred = &res.predicted;
        let status = sim_status(res.status.name(), outcome);
        for (i, p) in pred.items.iter().enumerate() {
            let mut row = vec![
                point.label(),
                cell(point.value),
                (i + 1).to_string(),
                cell(opt.problem.arrival_rates()[i]),
                cell(res.windows[i]),
                cell(res.nbars[i]),
                cell(p.refresh_probability),
                cell(p.refresh_frequency),
                cell(p.mean_aoi),
                delay_cell(pred),
                cell(res.dual_price),
            ];
            row.extend(sim_cells(report.map(|r| &r.items[i]), pooled));
            row.push(status.to_owned());
            table.push(row);
        }
        let mut row = vec![
            point.label(),
            cell(point.value),
            "0".into(),
            cell(total),
            MISSING.into(),
            cell(pred.system.nbar),
            cell(pred.system.refresh_probability),
            cell(pred.system.refresh_frequency),
            cell(pred.system.mean_aoi),
            delay_cell(pred),
            cell(res.dual_price),
        ];
        let sim = sim_cells(report.map(|r| &r.aggregate), pooled);
        row.extend(sim.iter().cloned());
        row.push(status.to_owned());
        table.push(row);

        writeln!(
            summary,
            "{} = {} [{}]: objective P = {:.6}  AoI = {:.6} s (budget {} s)  delay = {} s  simulated AoI = {} s",
            point.label(),
            cell(point.value),
            status,
            pred.system.refresh_probability,
            pred.system.mean_aoi,
            opt.problem.aoi_budget(),
            delay_cell(pred),
            sim[2],
        )
        .unwrap();
        for (i, w) in res.windows.iter().enumerate() {
            writeln!(
                summary,
                "  item {:>3}  lambda {:>10.4}  W {:.6} s  p {:.6}  freq {:.4} /s",
                i + 1,
                opt.problem.arrival_rates()[i],
                w,
                pred.items[i].refresh_probability,
                pred.items[i].refresh_frequency,
            )
            .unwrap();
        }
    }
    Ok(Outcome {
        table: Some(table),
        summary,
    })
}
