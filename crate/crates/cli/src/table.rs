//! Fixed-schema result tables and their CSV rendering.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Written in place of a value that is missing or undefined (an unstable
/// queue, a diverged simulation, a single replication's half-width).
pub const MISSING: &str = "unstable";

pub const SIMULATE_COLUMNS: &[&str] = &[
    "sweep_param",
    "sweep_value",
    "item_id",
    "analytic_p",
    "analytic_refresh_freq",
    "analytic_aoi_s",
    "analytic_delay_s",
    "sim_refresh_frac",
    "sim_refresh_frac_hw",
    "sim_aoi_s",
    "sim_aoi_hw",
    "sim_delay_s",
    "sim_delay_hw",
    "status",
];

pub const ANALYZE_COLUMNS: &[&str] = &[
    "sweep_param",
    "sweep_value",
    "item_id",
    "analytic_p",
    "analytic_refresh_freq",
    "analytic_aoi_s",
    "analytic_delay_s",
    "analytic_delay_min_s",
    "analytic_delay_max_s",
    "status",
];

pub const OPTIMIZE_COLUMNS: &[&str] = &[
    "sweep_param",
    "sweep_value",
    "item_id",
    "arrival_rate",
    "window_s",
    "nbar",
    "analytic_p",
    "analytic_refresh_freq",
    "analytic_aoi_s",
    "analytic_delay_s",
    "dual_price",
    "sim_refresh_frac",
    "sim_refresh_frac_hw",
    "sim_aoi_s",
    "sim_aoi_hw",
    "sim_delay_s",
    "sim_delay_hw",
    "status",
];

/// Renders a number as a plain decimal literal, or [`MISSING`].
pub fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        MISSING.to_owned()
    }
}

pub fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_owned(), cell)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &'static [&'static str]) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row does not match the schema"
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|&c| c == name)
    }

    /// The raw cell at `row`, column `name`.
    ///
    /// # Panics
    ///
    /// If the column is not part of the schema.
    pub fn get(&self, row: usize, name: &str) -> &str {
        let col = self
            .column_index(name)
            .unwrap_or_else(|| panic!("no column `{name}`"));
        &self.rows[row][col]
    }

    /// The cell parsed as a number; `None` for [`MISSING`].
    pub fn number(&self, row: usize, name: &str) -> Option<f64> {
        self.get(row, name).parse().ok()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
    }

    /// Writes `<dir>/<name>_<seed>.csv`, creating `dir` if needed.
    pub fn write(&self, dir: &Path, name: &str, seed: u64) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{name}_{seed}.csv"));
        fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}
