//! Machine-readable experiment reports.
//!
//! `report.json` is a pure function of the configuration and seed, so two runs
//! with equal inputs produce identical bytes. Wall-clock data goes to the
//! sidecar `report.meta.json`. Time series are written as RFC 4180 CSV with
//! the fixed column set [`CSV_COLUMNS`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 6] = ["time", "energy", "enstrophy", "divergence_max", "h1", "h2"];

/// Where a numeric constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// An exponent or constant taken from the analysis, such as 3/8 or 3/4.
    PaperWindow,
    /// A constant fixed by a calibration or a documented choice of this crate.
    Calibrated,
    /// A quantity computed during the run.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub threshold: f64,
    pub threshold_provenance: Provenance,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            measured,
            relation: Relation::AtMost,
            threshold,
            threshold_provenance: provenance,
            pass: measured <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            measured,
            relation: Relation::AtLeast,
            threshold,
            threshold_provenance: provenance,
            pass: measured >= threshold,
        }
    }

    /// A yes/no audit, recorded as `measured = 1` for true against `>= 1`.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0, Provenance::Calibrated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constant {
    pub name: String,
    pub value: f64,
    pub provenance: Provenance,
}

impl Constant {
    pub fn new(name: impl Into<String>, value: f64, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            value,
            provenance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub constants: Vec<Constant>,
    pub results: serde_json::Value,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, seed: u64, config: ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            config,
            passed: true,
            checks: Vec::new(),
            constants: Vec::new(),
            results: serde_json::Value::Object(Default::default()),
            artifacts: Vec::new(),
        }
    }

    pub fn check(&mut self, check: Check) {
        self.passed &= check.pass;
        self.checks.push(check);
    }

    pub fn constant(&mut self, name: &str, value: f64, provenance: Provenance) {
        self.constants.push(Constant::new(name, value, provenance));
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) -> Result<()> {
        let v = serde_json::to_value(value).map_err(|e| Error::invalid(format!("serializing {key}: {e}")))?;
        if let serde_json::Value::Object(map) = &mut self.results {
            map.insert(key.to_string(), v);
        }
        Ok(())
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("serializing report: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    /// Writes `report.json` and the `report.meta.json` sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("report.json");
        write_text(&path, &self.to_json()?)?;
        let meta = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "written_at": chrono::Utc::now().to_rfc3339(),
            "crate_version": env!("CARGO_PKG_VERSION"),
        });
        write_text(&dir.join("report.meta.json"), &format!("{meta:#}\n"))?;
        Ok(path)
    }
}

/// One row of the simulation time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub time: f64,
    pub energy: f64,
    pub enstrophy: f64,
    pub divergence_max: f64,
    pub h1: f64,
    pub h2: f64,
}

pub fn write_series(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checks_record_failures_by_name() {
        let mut r = Report::new("simulate", 0, ExperimentConfig::parse("").unwrap());
        r.check(Check::at_most("divergence", 1e-14, 1e-12, Provenance::Calibrated));
        assert!(r.passed);
        r.check(Check::at_least("order", 1.2, 1.8, Provenance::Calibrated));
        assert!(!r.passed);
        assert_eq!(r.failures(), vec!["order"]);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"relation\": \">=\""));
        assert!(json.contains("\"threshold_provenance\": \"calibrated\""));
    }

    #[test]
    fn series_header_matches_fixed_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let row = SeriesRow {
            time: 0.0,
            energy: 0.25,
            enstrophy: 1.0,
            divergence_max: 0.0,
            h1: 1.0,
            h2: 2.0,
        };
        write_series(&path, &[row, row]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, CSV_COLUMNS.join(","));
        assert_eq!(text.lines().count(), 3);
    }
}
