use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AccuracyRow, DistributionRow, EvalError, TimingRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Break-even point of one surrogate against the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub model: String,
    pub case: String,
    pub nn_upfront_s: f64,
    pub nn_runtime_s: f64,
    pub solver_runtime_s: f64,
    /// Empty when the surrogate never breaks even.
    pub critical_n: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub timing: Vec<TimingRow>,
    pub accuracy: Vec<AccuracyRow>,
    pub distribution: Vec<DistributionRow>,
    pub cost: Vec<CostRow>,
}

impl Default for BenchmarkReport {
    fn default() -> Self {
        BenchmarkReport {
            schema_version: REPORT_SCHEMA_VERSION,
            timing: Vec::new(),
            accuracy: Vec::new(),
            distribution: Vec::new(),
            cost: Vec::new(),
        }
    }
}

impl BenchmarkReport {
    pub fn is_empty(&self) -> bool {
        self.timing.is_empty()
            && self.accuracy.is_empty()
            && self.distribution.is_empty()
            && self.cost.is_empty()
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| EvalError::Io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| EvalError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| EvalError::Io(e.to_string()))
}

/// Writes one CSV per non-empty table plus `report.json` holding everything.
/// Rows keep the order they were added in.
pub fn emit_report(report: &BenchmarkReport, dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir).map_err(|e| EvalError::Io(e.to_string()))?;
    if !report.timing.is_empty() {
        write_csv(&dir.join("timing.csv"), &report.timing)?;
    }
    if !report.accuracy.is_empty() {
        write_csv(&dir.join("accuracy.csv"), &report.accuracy)?;
    }
    if !report.distribution.is_empty() {
        write_csv(&dir.join("distribution.csv"), &report.distribution)?;
    }
    if !report.cost.is_empty() {
        write_csv(&dir.join("cost.csv"), &report.cost)?;
    }
    let json = serde_json::to_string_pretty(report).map_err(|e| EvalError::Io(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json).map_err(|e| EvalError::Io(e.to_string()))
}

pub fn read_report(dir: &Path) -> Result<BenchmarkReport, EvalError> {
    let text =
        std::fs::read_to_string(dir.join("report.json")).map_err(|e| EvalError::Io(e.to_string()))?;
    let report: BenchmarkReport =
        serde_json::from_str(&text).map_err(|e| EvalError::Io(e.to_string()))?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(EvalError::Schema {
            found: report.schema_version,
            expected: REPORT_SCHEMA_VERSION,
        });
    }
    Ok(report)
}
