use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use aoi_cache::desim::Policy;
use aoi_cache_cli::{presets, run, Command, Overrides, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "aoicache",
    version,
    about = "Freshness-aware edge cache: analysis, simulation and window optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory for CSV files
    #[arg(long, default_value = "./out")]
    out: PathBuf,
    /// Base seed for the simulator
    #[arg(long)]
    seed: Option<u64>,
    /// Independent replications per sweep point
    #[arg(long)]
    replications: Option<usize>,
    /// Base refresh policy: freshness_window, always_refresh or never_refresh
    #[arg(long)]
    policy: Option<Policy>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Print the delivery and fetch rates and the AoI floor
    Rates(Common),
    /// Closed-form predictions only
    Analyze(Common),
    /// Simulation with analytic predictions alongside
    Simulate(Common),
    /// Optimal per-item windows under an AoI budget
    Optimize(Common),
    /// Run a bundled scenario; `list` shows the names
    Preset {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print a scenario in canonical form
    Echo(Common),
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn output_name(scenario: &Scenario, fallback: &str) -> String {
    scenario
        .run
        .name
        .clone()
        .unwrap_or_else(|| fallback.to_owned())
}

fn execute(command: Command, mut scenario: Scenario, name: &str, common: &Common) -> Result<()> {
    scenario.apply_overrides(&Overrides {
        seed: common.seed,
        replications: common.replications,
        policy: common.policy,
    });
    let outcome = run(command, &scenario)?;
    print!("{}", outcome.summary);
    if let Some(table) = outcome.table {
        let path = table
            .write(&common.out, name, scenario.seed())
            .with_context(|| format!("writing to {}", common.out.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn from_file(command: Command, common: &Common) -> Result<()> {
    let path = common
        .scenario
        .as_deref()
        .ok_or_else(|| anyhow!("--scenario <path> is required"))?;
    let scenario = load(path)?;
    let stem = path
        .file_stem()
        .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
    let name = output_name(&scenario, &stem);
    execute(command, scenario, &name, common)
}

fn main_inner() -> Result<()> {
    match Cli::parse().command {
        Sub::Rates(c) => from_file(Command::Rates, &c),
        Sub::Analyze(c) => from_file(Command::Analyze, &c),
        Sub::Simulate(c) => from_file(Command::Simulate, &c),
        Sub::Optimize(c) => from_file(Command::Optimize, &c),
        Sub::Echo(c) => {
            let path = c
                .scenario
                .as_deref()
                .ok_or_else(|| anyhow!("--scenario <path> is required"))?;
            print!("{}", load(path)?.to_canonical());
            Ok(())
        }
        Sub::Preset { name, common } => {
            if name == "list" {
                for n in presets::names() {
                    println!("{n}");
                }
                return Ok(());
            }
            let Some(scenario) = presets::load(&name) else {
                let known: Vec<_> = presets::names().collect();
                bail!("unknown preset `{name}`; known: {}", known.join(", "));
            };
            let scenario = scenario.with_context(|| format!("preset {name}"))?;
            let command = scenario.run.command.unwrap_or(Command::Analyze);
            let out_name = output_name(&scenario, &name);
            execute(command, scenario, &out_name, &common)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
