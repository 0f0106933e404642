//! Experiment reports: config echo, per-trial table, summary, and pass/fail
//! criteria. Serialisation is byte-deterministic; wall-clock time is kept
//! out of the JSON body.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use super::config::ExperimentConfig;

pub const SCHEMA_VERSION: &str = "1";

/// Where a threshold comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Stated in the source paper.
    Paper,
    /// Derived independently (exact arithmetic, enumeration, linearity).
    Derived,
    /// Calibrated by a pilot run and frozen.
    Pilot,
    /// Holds by construction.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

impl Comparison {
    pub fn holds(&self, observed: f64, threshold: f64) -> bool {
        match self {
            Self::AtMost => observed <= threshold,
            Self::Below => observed < threshold,
            Self::AtLeast => observed >= threshold,
            Self::Equal => observed == threshold,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Self::AtMost => "<=",
            Self::Below => "<",
            Self::AtLeast => ">=",
            Self::Equal => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
    pub provenance: Provenance,
}

impl Criterion {
    pub fn new(
        name: impl Into<String>,
        observed: f64,
        comparison: Comparison,
        threshold: f64,
        provenance: Provenance,
    ) -> Self {
        Self {
            name: name.into(),
            observed,
            threshold,
            comparison,
            passed: comparison.holds(observed, threshold),
            provenance,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: observed {:.6e} {} {:.6e} ({:?})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.comparison.symbol(),
            self.threshold,
            self.provenance
        )
    }
}

/// Per-trial records as a column table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column; non-numeric cells are skipped.
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        let Some(k) = self.column_index(name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[k].as_f64()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(csv_cell).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RngProvenance {
    pub generator: String,
    pub master_seed: u64,
    pub stream_rule: String,
}

impl RngProvenance {
    pub fn new(master_seed: u64, stream_rule: impl Into<String>) -> Self {
        Self {
            generator: crate::permmat::RNG_DESCRIPTION.to_string(),
            master_seed,
            stream_rule: stream_rule.into(),
        }
    }
}

/// Extra output file produced alongside the report (for example an
/// eigenvalue cloud).
#[derive(Debug, Clone, PartialEq)]
pub struct Attachment {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: &'static str,
    pub kind: String,
    pub config: Value,
    pub rng: RngProvenance,
    pub trials: Table,
    pub summary: BTreeMap<String, Value>,
    pub criteria: Vec<Criterion>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub attachments: Vec<Attachment>,
    #[serde(skip)]
    pub wall_clock_seconds: Option<f64>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig, stream_rule: impl Into<String>, trials: Table) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: cfg.kind.to_string(),
            config: cfg.to_value(),
            rng: RngProvenance::new(cfg.master_seed, stream_rule),
            trials,
            summary: BTreeMap::new(),
            criteria: Vec::new(),
            notes: Vec::new(),
            attachments: Vec::new(),
            wall_clock_seconds: None,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn criterion(&self, name: &str) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn summarize(&mut self, key: impl Into<String>, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.insert(key.into(), v);
    }

    pub fn check(&mut self, c: Criterion) {
        self.criteria.push(c);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    /// One line per criterion.
    pub fn criteria_lines(&self) -> String {
        let mut out = String::new();
        for c in &self.criteria {
            let _ = writeln!(out, "{c}");
        }
        out
    }
}
