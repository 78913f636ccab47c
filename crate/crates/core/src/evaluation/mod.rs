//! Scoring predictions and arrangements, and the experiment protocols that
//! produce those scores.

pub mod baselines;
pub mod metrics;
pub mod protocols;
pub mod synthetic;

use std::fmt::Write as _;
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use metrics::{ClassificationReport, ErrorReport};
use protocols::{GroceriesConfig, IncrementalConfig, LatentConfig, ShelvingConfig, ToysConfig};

pub use baselines::PairMeans;
pub use metrics::{
    arrangement_success, classification_report, edit_distance, mean_error_report, misplaced_objects, Confusion,
    ErrorStats,
};
pub use synthetic::{bootstrap_matrix, ArchetypeSpec, GenSpec, SyntheticSpec};

/// How a row's predictions were made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Cluster-chosen probes, factor model.
    #[serde(rename = "CF")]
    Cf,
    /// Random probes, factor model.
    #[serde(rename = "CF-rand")]
    CfRand,
    /// Cluster-chosen probes, per-pair mean.
    #[serde(rename = "Baseline-I")]
    BaselineOne,
    /// Random probes, per-pair mean.
    #[serde(rename = "Baseline-II")]
    BaselineTwo,
    /// Removed objects put on random shelves.
    #[serde(rename = "Baseline-III")]
    BaselineThree,
    /// Whole matrix retrained with the new users included.
    #[serde(rename = "batch")]
    Batch,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Cf => "CF",
            Method::CfRand => "CF-rand",
            Method::BaselineOne => "Baseline-I",
            Method::BaselineTwo => "Baseline-II",
            Method::BaselineThree => "Baseline-III",
            Method::Batch => "batch",
        }
    }

    pub fn uses_cluster_probes(self) -> bool {
        matches!(self, Method::Cf | Method::BaselineOne)
    }

    pub fn uses_model(self) -> bool {
        matches!(self, Method::Cf | Method::CfRand | Method::Batch)
    }
}

/// One method at one experimental setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_users: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edit_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    /// Probed users (or training entries for the latent sweep) behind the row.
    pub samples: usize,
}

impl ReportRow {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            probes: None,
            removed: None,
            training_users: None,
            k: None,
            classification: None,
            errors: None,
            success_rate: None,
            edit_distance: None,
            rmse: None,
            samples: 0,
        }
    }

    pub fn macro_f(&self) -> Option<f64> {
        self.classification.as_ref().map(|c| c.macro_f)
    }

    pub fn mean_error(&self) -> Option<f64> {
        self.errors.as_ref().map(|e| e.mean_abs_error)
    }
}

/// Output of a protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub seed: u64,
    /// The effective configuration, defaults filled in.
    pub config: Value,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
    pub runtime_seconds: f64,
}

pub const PROTOCOLS: [&str; 5] = ["toys", "groceries", "shelving", "incremental", "latent"];

fn parse_config<T: DeserializeOwned + Serialize + Default>(config: Option<&Value>) -> Result<(T, Value)> {
    let parsed: T = match config {
        None | Some(Value::Null) => T::default(),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("protocol config: {e}")))?,
    };
    let effective = serde_json::to_value(&parsed)?;
    Ok((parsed, effective))
}

/// Run a named protocol. `config` overrides any subset of its defaults.
pub fn run_protocol(name: &str, config: Option<&Value>, seed: u64) -> Result<EvalReport> {
    let started = Instant::now();
    let (effective, (rows, notes)) = match name {
        "toys" => {
            let (cfg, v) = parse_config::<ToysConfig>(config)?;
            (v, protocols::run_toys(&cfg, seed)?)
        }
        "groceries" => {
            let (cfg, v) = parse_config::<GroceriesConfig>(config)?;
            (v, protocols::run_groceries(&cfg, seed)?)
        }
        "shelving" => {
            let (cfg, v) = parse_config::<ShelvingConfig>(config)?;
            (v, protocols::run_shelving(&cfg, seed)?)
        }
        "incremental" => {
            let (cfg, v) = parse_config::<IncrementalConfig>(config)?;
            (v, protocols::run_incremental(&cfg, seed)?)
        }
        "latent" => {
            let (cfg, v) = parse_config::<LatentConfig>(config)?;
            (v, protocols::run_latent(&cfg, seed)?)
        }
        other => return Err(Error::UnknownProtocol(other.to_string())),
    };
    Ok(EvalReport {
        protocol: name.to_string(),
        seed,
        config: effective,
        rows,
        notes,
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn count_cell(value: Option<usize>) -> String {
    value.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl EvalReport {
    /// Rows for `method`, in report order.
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ReportRow> + '_ {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn find(&self, method: Method, setting: impl Fn(&ReportRow) -> bool) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && setting(r))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width text table, one line per row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "protocol {} seed {} ({:.1}s)", self.protocol, self.seed, self.runtime_seconds);
        let _ = writeln!(
            out,
            "{:<13} {:>6} {:>7} {:>6} {:>3} {:>7} {:>7} {:>6} {:>7} {:>6} {:>7} {:>7}",
            "method",
            "probes",
            "removed",
            "users",
            "k",
            "macroF",
            "meanErr",
            "err=0",
            "success",
            "d",
            "rmse",
            "samples"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<13} {:>6} {:>7} {:>6} {:>3} {:>7} {:>7} {:>6} {:>7} {:>6} {:>7} {:>7}",
                r.method.label(),
                count_cell(r.probes),
                count_cell(r.removed),
                count_cell(r.training_users),
                count_cell(r.k),
                cell(r.macro_f()),
                cell(r.mean_error()),
                cell(r.errors.as_ref().map(|e| e.histogram[0])),
                cell(r.success_rate),
                cell(r.edit_distance),
                cell(r.rmse),
                r.samples
            );
        }
        for note in &self.notes {
            let _ = writeln!(out, "# {note}");
        }
        out
    }
}
