//! Experiment orchestration behind the `cdpm` binary.
//!
//! Each `run_*` function takes a resolved [`ExperimentConfig`] and returns a
//! [`RunReport`]: a set of CSV tables plus named pass/fail checks. Nothing is
//! written to disk here except by [`RunReport::write`].

mod checks;
mod compare;
mod config;
mod dataset;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use checks::{run_bounds, run_contraction, run_kernel_check, run_transform_check, run_w2};
pub use compare::{paired_one_sided, run_compare, run_swissroll, PairedTest, PUBLISHED_POINT_MASS_W2};
pub use config::{
    steps_for, BoundsSection, CheckSection, ExperimentConfig, MetricSection, NoiseSection, OutputSection,
    Overrides, SamplerSection, SdeSection, SweepSection, TargetSection,
};
pub use dataset::{generate_dataset, generate_n, DatasetKind, DatasetSpec};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    /// CSV text preceded by `#` provenance lines.
    pub fn render(&self, prov: &Provenance) -> String {
        let mut s = String::new();
        prov.header(&mut s);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip formatting, so equal values always print identically.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    fn header(&self, s: &mut String) {
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "# cdpm {VERSION}");
        let _ = writeln!(s, "# command: {}", self.command);
        let _ = writeln!(s, "# config_sha256: {}", self.config_hash);
        let _ = writeln!(s, "# seeds: {}", seeds.join(" "));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub provenance: Provenance,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
}

impl RunReport {
    pub(crate) fn new(command: &str, cfg: &ExperimentConfig, seeds: Vec<u64>) -> Self {
        let provenance = Provenance { command: command.to_string(), config_hash: cfg.hash(), seeds };
        Self { provenance, tables: Vec::new(), checks: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "status", "detail"]);
        for c in &self.checks {
            let detail = c.detail.replace(',', ";");
            t.push(vec![c.name.clone(), if c.pass { "PASS" } else { "FAIL" }.into(), detail]);
        }
        t
    }

    /// Writes `<command>_<table>.csv` for every table and `<command>_checks.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let checks = self.checks_table();
        for t in self.tables.iter().chain(std::iter::once(&checks)) {
            let p = dir.join(format!("{}_{}.csv", self.provenance.command.replace('-', "_"), t.name));
            fs::write(&p, t.render(&self.provenance))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_has_provenance() {
        let cfg = ExperimentConfig::default();
        let mut r = RunReport::new("demo", &cfg, vec![3, 4]);
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![num(0.1), num(f64::NAN)]);
        r.tables.push(t);
        r.checks.push(Check::new("ok", true, "fine, really"));
        let text = r.tables[0].render(&r.provenance);
        assert!(text.starts_with(&format!("# cdpm {VERSION}\n# command: demo\n# config_sha256: {}\n# seeds: 3 4\n", cfg.hash())));
        assert!(text.ends_with("a,b\n0.1,NaN\n"));
        assert!(r.passed());
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert!(fs::read_to_string(&files[1]).unwrap().contains("ok,PASS,fine; really"));
    }
}
