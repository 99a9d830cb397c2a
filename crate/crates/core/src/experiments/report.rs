//! Machine-readable scenario reports: JSON with stable key order plus one
//! CSV file per table.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
    Equals(f64),
}

impl Threshold {
    pub fn accepts(&self, x: f64) -> bool {
        match *self {
            Threshold::AtMost(t) => x <= t,
            Threshold::AtLeast(t) => x >= t,
            Threshold::Within(a, b) => (a..=b).contains(&x),
            Threshold::Equals(t) => x == t,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Threshold::AtMost(t) => write!(f, "<= {}", Num(t)),
            Threshold::AtLeast(t) => write!(f, ">= {}", Num(t)),
            Threshold::Within(a, b) => write!(f, "in [{}, {}]", Num(a), Num(b)),
            Threshold::Equals(t) => write!(f, "== {}", Num(t)),
        }
    }
}

struct Num(f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a != 0.0 && !(1e-3..1e5).contains(&a) {
            write!(f, "{:e}", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub measured: Option<f64>,
    pub threshold: Threshold,
    pub pass: bool,
}

impl Verdict {
    /// NaN measurements always fail.
    pub fn new(name: impl Into<String>, measured: f64, threshold: Threshold) -> Self {
        let pass = !measured.is_nan() && threshold.accepts(measured);
        Verdict {
            name: name.into(),
            measured: Some(measured).filter(|x| !x.is_nan()),
            threshold,
            pass,
        }
    }

    pub fn line(&self) -> String {
        let m = match self.measured {
            Some(x) => format!("{x:.6e}"),
            None => "n/a".into(),
        };
        format!("{} {}: measured {} (threshold {})", if self.pass { "PASS" } else { "FAIL" }, self.name, m, self.threshold)
    }
}

// Non-finite numbers are written as JSON `null` and read back as NaN.
fn rows_with_nulls<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    let raw: Vec<Vec<Option<f64>>> = Deserialize::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|r| r.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
        .collect())
}

fn map_with_nulls<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, f64>, D::Error> {
    let raw: BTreeMap<String, Option<f64>> = Deserialize::deserialize(d)?;
    Ok(raw.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    #[serde(deserialize_with = "rows_with_nulls")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    #[serde(deserialize_with = "map_with_nulls")]
    pub scalars: BTreeMap<String, f64>,
    pub tables: BTreeMap<String, Table>,
    pub verdicts: Vec<Verdict>,
    pub failures: Vec<StageFailure>,
    /// Auxiliary file names, relative to the report directory.
    pub artifacts: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip)]
    pub artifact_data: BTreeMap<String, String>,
}

impl Report {
    pub fn new(scenario: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        Report {
            scenario: scenario.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            scalars: BTreeMap::new(),
            tables: BTreeMap::new(),
            verdicts: Vec::new(),
            failures: Vec::new(),
            artifacts: BTreeMap::new(),
            timings: BTreeMap::new(),
            artifact_data: BTreeMap::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn verdict(&mut self, name: &str, measured: f64, threshold: Threshold) {
        self.verdicts.push(Verdict::new(name, measured, threshold));
    }

    pub fn verdict_named(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.get(name).ok_or_else(|| Error::MissingTable(name.to_string()))
    }

    pub fn attach(&mut self, key: &str, file: &str, contents: String) {
        self.artifacts.insert(key.to_string(), file.to_string());
        self.artifact_data.insert(file.to_string(), contents);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// JSON with the timing map emptied, for reproducibility comparisons.
    pub fn to_json_without_timings(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.timings.clear();
        copy.to_json()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Report> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Writes `<scenario>.json`, `<scenario>_<table>.csv` and artifacts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        for (name, table) in &self.tables {
            let mut w = csv::Writer::from_path(dir.join(format!("{}_{}.csv", self.scenario, name)))?;
            w.write_record(&table.columns)?;
            for row in &table.rows {
                w.write_record(row.iter().map(|x| format!("{x:?}")))?;
            }
            w.flush()?;
        }
        for (file, contents) in &self.artifact_data {
            std::fs::write(dir.join(file), contents)?;
        }
        let path = dir.join(format!("{}.json", self.scenario));
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }
}
