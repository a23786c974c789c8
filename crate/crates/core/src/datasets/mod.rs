//! Training, validation, test and collocation sets on regular `(t, P)` grids.

mod grid;
mod io;

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{GridSpec, Scenario};
pub use io::{content_hash, load_dataset, save_dataset};

use crate::grid::{find_equilibrium, Disturbance, NetworkModel};
use crate::solver::{sample_dense, simulate_from, SolverConfig, SolverError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("grid: {0}")]
    Grid(String),
    #[error("trajectory for P = {magnitude} pu failed: {source}")]
    Trajectory {
        magnitude: f64,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("content hash mismatch: manifest {expected}, payload {found}")]
    HashMismatch { expected: String, found: String },
    #[error("format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
}

/// Provenance and bookkeeping stored next to the payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: String,
    pub case: String,
    pub grid: GridSpec,
    pub solver: Option<SolverConfig>,
    /// Sum of per-trajectory solver wall times.
    pub wall_time_s: f64,
    pub trajectories: usize,
    pub row_count: usize,
    pub content_hash: String,
    pub columns: Vec<String>,
}

/// Rows of `(t, P_dist)` with relative-state targets and their time
/// derivatives. Collocation sets carry inputs only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scenario: String,
    pub case: String,
    pub grid: GridSpec,
    pub state_names: Vec<String>,
    pub inputs: Array2<f64>,
    pub targets: Option<Array2<f64>>,
    pub target_derivs: Option<Array2<f64>>,
    pub solver: Option<SolverConfig>,
    pub wall_time_s: f64,
    pub trajectories: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_targets(&self) -> bool {
        self.targets.is_some()
    }

    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string(), "P_dist".to_string()];
        if self.has_targets() {
            cols.extend(self.state_names.iter().cloned());
            cols.extend(self.state_names.iter().map(|n| format!("d_{n}")));
        }
        cols
    }
}

/// Ground-truth tolerance for generated data.
pub const GROUND_TRUTH_TOLERANCE: f64 = 1e-10;

/// Simulates one trajectory per disturbance magnitude on the grid and samples
/// it at the grid times. Magnitudes run in parallel; rows keep grid order.
pub fn generate(
    label: &str,
    grid: &GridSpec,
    network: &NetworkModel,
    config: &SolverConfig,
) -> Result<Dataset, DatasetError> {
    grid.validate()?;
    let bus = network
        .default_disturbance_bus
        .ok_or_else(|| DatasetError::Grid("case has no disturbance bus".into()))?;
    let x0 = find_equilibrium(network, &Disturbance::none(bus), &Default::default())
        .map_err(SolverError::from)?
        .pack();
    let ts = grid.t_values();
    let ps = grid.p_values();
    let t_max = grid.t_range.1;
    let layout = &network.layout;

    let per_p: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> = ps
        .par_iter()
        .map(|&p| {
            let dist = Disturbance::new(bus, p);
            let start = Instant::now();
            let traj = simulate_from(network, dist, &x0, t_max, config)
                .map_err(|source| DatasetError::Trajectory { magnitude: p, source })?;
            let elapsed = start.elapsed().as_secs_f64();
            let (states, _) = sample_dense(&traj, &ts)?;
            let mut xs = Vec::with_capacity(ts.len());
            let mut ds = Vec::with_capacity(ts.len());
            for x in states {
                let d = network.state_derivative(&x, &dist);
                xs.push(layout.to_relative(&x));
                ds.push(relative_derivative(network, &d));
            }
            Ok((xs, ds, elapsed))
        })
        .collect::<Result<_, DatasetError>>()?;

    let n_state = layout.relative_len();
    let rows = ts.len() * ps.len();
    let mut inputs = Array2::zeros((rows, 2));
    let mut targets = Array2::zeros((rows, n_state));
    let mut derivs = Array2::zeros((rows, n_state));
    let mut r = 0;
    for (ti, &t) in ts.iter().enumerate() {
        for (pi, &p) in ps.iter().enumerate() {
            inputs[(r, 0)] = t;
            inputs[(r, 1)] = p;
            for k in 0..n_state {
                targets[(r, k)] = per_p[pi].0[ti][k];
                derivs[(r, k)] = per_p[pi].1[ti][k];
            }
            r += 1;
        }
    }
    Ok(Dataset {
        scenario: label.to_string(),
        case: network.name.clone(),
        grid: *grid,
        state_names: layout.relative_names(),
        inputs,
        targets: Some(targets),
        target_derivs: Some(derivs),
        solver: Some(config.clone()),
        wall_time_s: per_p.iter().map(|v| v.2).sum(),
        trajectories: ps.len(),
    })
}

/// Time derivative of the relative state from the absolute one.
pub fn relative_derivative(network: &NetworkModel, xdot: &[f64]) -> Vec<f64> {
    // the map to relative coordinates is linear
    network.layout.to_relative(xdot)
}

/// Training set of a scenario at ground-truth tolerance.
pub fn generate_scenario(scenario: Scenario, network: &NetworkModel) -> Result<Dataset, DatasetError> {
    generate(
        scenario.label(),
        &scenario.grid(),
        network,
        &SolverConfig::with_tolerance(GROUND_TRUTH_TOLERANCE),
    )
}

/// Validation set of a scenario: the training grid shifted by half a step.
pub fn generate_offset_validation(
    scenario: Scenario,
    network: &NetworkModel,
    config: &SolverConfig,
) -> Result<Dataset, DatasetError> {
    generate(
        &format!("{}-validation", scenario.label()),
        &scenario.validation_grid(),
        network,
        config,
    )
}

/// Input-only dataset for the physics loss.
pub fn collocation_grid(grid: &GridSpec, case: &str) -> Result<Dataset, DatasetError> {
    grid.validate()?;
    let pts = grid.points();
    let mut inputs = Array2::zeros((pts.len(), 2));
    for (r, (t, p)) in pts.iter().enumerate() {
        inputs[(r, 0)] = *t;
        inputs[(r, 1)] = *p;
    }
    Ok(Dataset {
        scenario: "collocation".to_string(),
        case: case.to_string(),
        grid: *grid,
        state_names: Vec::new(),
        inputs,
        targets: None,
        target_derivs: None,
        solver: None,
        wall_time_s: 0.0,
        trajectories: 0,
    })
}
