//! JSON report bodies. Field order is declaration order, so output is
//! byte-stable for a fixed config and seed.

use figdesign::diagnosis::{FigReport, RedundancyReport};
use figdesign::optimizer::{MaximaReport, Maximum, StartStats};
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub settings: ProblemConfig,
    pub q: usize,
    pub local_maxima: usize,
    pub best_value: f64,
    pub starts_converged: usize,
    pub maxima: Vec<Maximum>,
    pub start_stats: StartStats,
}

impl OptimizeReport {
    pub fn new(cfg: &ProblemConfig, report: MaximaReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "optimize".into(),
            config_hash: cfg.hash(),
            settings: cfg.clone(),
            q: report.q,
            local_maxima: report.local_maxima,
            best_value: report.best_value,
            starts_converged: report.starts_converged,
            maxima: report.maxima,
            start_stats: report.stats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseReport {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub settings: ProblemConfig,
    /// Verdict lines joined with "; ".
    pub verdict: String,
    pub q: usize,
    pub maxima: Vec<Maximum>,
    pub design: Vec<Vec<f64>>,
    pub expected_fig: f64,
    pub redundancy: RedundancyReport,
}

impl DiagnoseReport {
    pub fn new(cfg: &ProblemConfig, report: FigReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: "diagnose".into(),
            config_hash: cfg.hash(),
            settings: cfg.clone(),
            verdict: verdict_line(&report.redundancy),
            q: report.maxima.q,
            maxima: report.maxima.maxima,
            design: report.design.points().to_vec(),
            expected_fig: report.expected_fig,
            redundancy: report.redundancy,
        }
    }
}

pub fn verdict_line(r: &RedundancyReport) -> String {
    if r.verdicts.is_empty() {
        format!("OK: q={} >= p={}, rank(M)=p at some prior draw", r.q, r.p)
    } else {
        r.verdicts.join("; ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub quad_order: usize,
    pub dedup_tol: f64,
    pub q: usize,
    pub local_maxima: usize,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDiscrepancy {
    pub quad_order: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub schema_version: u32,
    pub command: String,
    pub example: String,
    pub passed: bool,
    pub assertions: Vec<AssertionOutcome>,
    pub diagnosis: DiagnoseReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_oracle: Option<MaximaReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub closed_form_check: Vec<OrderDiscrepancy>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}
