use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::{Dataset, DatasetError, DatasetManifest};

fn io_err(path: &Path, e: impl std::fmt::Display) -> DatasetError {
    DatasetError::Io(format!("{}: {e}", path.display()))
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_csv(ds: &Dataset) -> Result<Vec<u8>, DatasetError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ds.columns()).map_err(|e| DatasetError::Format(e.to_string()))?;
    let mut row = Vec::new();
    for r in 0..ds.len() {
        row.clear();
        row.extend(ds.inputs.row(r).iter().map(|v| v.to_string()));
        if let (Some(x), Some(d)) = (&ds.targets, &ds.target_derivs) {
            row.extend(x.row(r).iter().map(|v| v.to_string()));
            row.extend(d.row(r).iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(|e| DatasetError::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| DatasetError::Format(e.to_string()))
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

/// Writes `<stem>.csv` and `<stem>.json`; returns the manifest.
pub fn save_dataset(ds: &Dataset, dir: &Path, stem: &str) -> Result<DatasetManifest, DatasetError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let payload = to_csv(ds)?;
    let manifest = DatasetManifest {
        scenario: ds.scenario.clone(),
        case: ds.case.clone(),
        grid: ds.grid,
        solver: ds.solver.clone(),
        wall_time_s: ds.wall_time_s,
        trajectories: ds.trajectories,
        row_count: ds.len(),
        content_hash: content_hash(&payload),
        columns: ds.columns(),
    };
    let (csv_path, json_path) = paths(dir, stem);
    std::fs::write(&csv_path, &payload).map_err(|e| io_err(&csv_path, e))?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| DatasetError::Format(e.to_string()))?;
    std::fs::write(&json_path, json).map_err(|e| io_err(&json_path, e))?;
    Ok(manifest)
}

/// Reads a dataset written by [`save_dataset`], checking the content hash.
pub fn load_dataset(dir: &Path, stem: &str) -> Result<(Dataset, DatasetManifest), DatasetError> {
    let (csv_path, json_path) = paths(dir, stem);
    let json = std::fs::read_to_string(&json_path).map_err(|e| io_err(&json_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&json).map_err(|e| DatasetError::Format(e.to_string()))?;
    let payload = std::fs::read(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let found = content_hash(&payload);
    if found != manifest.content_hash {
        return Err(DatasetError::HashMismatch {
            expected: manifest.content_hash.clone(),
            found,
        });
    }
    let mut rdr = csv::Reader::from_reader(payload.as_slice());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| DatasetError::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 || header[0] != "t" || header[1] != "P_dist" {
        return Err(DatasetError::Format("expected leading t, P_dist columns".into()));
    }
    let extra = header.len() - 2;
    if extra % 2 != 0 {
        return Err(DatasetError::Format("state and derivative columns must pair up".into()));
    }
    let n_state = extra / 2;
    let state_names: Vec<String> = header[2..2 + n_state].to_vec();
    let mut values = Vec::with_capacity(manifest.row_count * header.len());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::Format(e.to_string()))?;
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| DatasetError::Format(format!("'{field}': {e}")))?,
            );
        }
    }
    let rows = values.len() / header.len();
    if rows != manifest.row_count {
        return Err(DatasetError::Format(format!(
            "manifest lists {} rows, payload has {rows}",
            manifest.row_count
        )));
    }
    let all = Array2::from_shape_vec((rows, header.len()), values)
        .map_err(|e| DatasetError::Format(e.to_string()))?;
    let inputs = all.slice(ndarray::s![.., 0..2]).to_owned();
    let (targets, target_derivs) = if n_state > 0 {
        (
            Some(all.slice(ndarray::s![.., 2..2 + n_state]).to_owned()),
            Some(all.slice(ndarray::s![.., 2 + n_state..]).to_owned()),
        )
    } else {
        (None, None)
    };
    let ds = Dataset {
        scenario: manifest.scenario.clone(),
        case: manifest.case.clone(),
        grid: manifest.grid,
        state_names,
        inputs,
        targets,
        target_derivs,
        solver: manifest.solver.clone(),
        wall_time_s: manifest.wall_time_s,
        trajectories: manifest.trajectories,
    };
    Ok((ds, manifest))
}
