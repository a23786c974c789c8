//! Accuracy metrics, error distributions, timing harness and the
//! break-even cost model.

mod cost;
mod metrics;
mod report;
mod timing;

pub use cost::{critical_n, total_cost, CostModel};
pub use metrics::{
    error_distribution, group_max_ae, max_ae, quantile_sorted, AccuracyRow, Axis, DistributionRow,
};
pub use report::{emit_report, read_report, BenchmarkReport, CostRow, REPORT_SCHEMA_VERSION};
pub use timing::{median, time_nn, time_solver, TimingRow, MIN_REPS, WARMUP};

use crate::datasets::Dataset;
use crate::grid::GridError;
use crate::nn::{NnError, Surrogate};
use crate::solver::SolverError;
use crate::training::{compute_scalings, pointwise_loss, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("shape: {0}")]
    Shape(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("report schema {found}, expected {expected}")]
    Schema { found: u32, expected: u32 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("io: {0}")]
    Io(String),
}

/// Max AE and per-point loss distributions of `model` on a labelled set.
#[derive(Debug, Clone, PartialEq)]
pub struct Accuracy {
    pub row: AccuracyRow,
    /// Per-point scaled squared error, with scalings from `test` itself.
    pub point_losses: Vec<f64>,
    pub by_t: Vec<DistributionRow>,
    pub by_p: Vec<DistributionRow>,
}

pub fn evaluate_accuracy(
    model: &Surrogate,
    name: &str,
    test: &Dataset,
    n_angles: usize,
) -> Result<Accuracy, EvalError> {
    let targets = test
        .targets
        .as_ref()
        .ok_or_else(|| EvalError::Config(format!("dataset {} has no targets", test.scenario)))?;
    let pred = model.predict(test.inputs.view())?;
    let (d, w) = group_max_ae(pred.view(), targets.view(), n_angles)?;
    let scalings = compute_scalings(targets.view(), n_angles)?;
    let point_losses = pointwise_loss(pred.view(), targets.view(), &scalings.xi_x);
    let by_t = error_distribution(&point_losses, test.inputs.view(), Axis::T)?;
    let by_p = error_distribution(&point_losses, test.inputs.view(), Axis::P)?;
    let seed = model.provenance.seed;
    Ok(Accuracy {
        row: AccuracyRow {
            model: name.to_string(),
            scenario: test.scenario.clone(),
            seed,
            max_ae_delta: d,
            max_ae_domega: w,
        },
        point_losses,
        by_t,
        by_p,
    })
}
