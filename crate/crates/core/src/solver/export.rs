use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SolverConfig, SolverError, SolverStats, Trajectory};
use crate::grid::Disturbance;

/// Metadata written next to an exported trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub case: String,
    pub disturbance: Disturbance,
    pub config: SolverConfig,
    pub wall_time_s: f64,
    pub stats: SolverStats,
    pub columns: Vec<String>,
}

/// Writes `<stem>.csv` (header `t`, then the state names) and `<stem>.json`.
pub fn write_trajectory(
    dir: &Path,
    stem: &str,
    traj: &Trajectory,
    manifest: &TrajectoryManifest,
) -> Result<(), SolverError> {
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut w = csv::Writer::from_path(dir.join(format!("{stem}.csv"))).map_err(io_err)?;
    let mut header = vec!["t".to_string()];
    header.extend(manifest.columns.iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    let json = serde_json::to_string_pretty(manifest).map_err(io_err)?;
    fs::write(dir.join(format!("{stem}.json")), json).map_err(io_err)?;
    Ok(())
}

/// Reads back the time column and states of an exported trajectory.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<String>, Vec<f64>, Vec<Vec<f64>>), SolverError> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    let header: Vec<String> = r.headers().map_err(io_err)?.iter().map(String::from).collect();
    let mut times = Vec::new();
    let mut states = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io_err)?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        times.push(vals[0]);
        states.push(vals[1..].to_vec());
    }
    Ok((header, times, states))
}

fn io_err<E: std::fmt::Display>(e: E) -> SolverError {
    SolverError::Io(e.to_string())
}
