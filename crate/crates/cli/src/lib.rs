//! Scenario files, experiment commands and CSV output for `aoicache`.

pub mod commands;
pub mod presets;
pub mod scenario;
pub mod table;

pub use commands::{run, Outcome};
pub use scenario::{Command, Overrides, Scenario, ScenarioError};
pub use table::Table;
