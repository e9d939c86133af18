//! Scenario files shipped with the tool, referenced by name.

use crate::scenario::{Scenario, ScenarioError};

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        /// `(name, file contents)` for every preset.
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../presets/", $name, ".toml")))),*
        ];
    };
}

presets![
    "table1",
    "symmetric_power",
    "case1",
    "case2",
    "case3",
    "fig4",
    "fig5",
    "fig6",
    "fig7",
    "fig8",
    "fig9",
    "heavy_load",
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn source(name: &str) -> Option<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Parses a preset; `None` if no preset has that name.
pub fn load(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    source(name).map(Scenario::parse)
}
