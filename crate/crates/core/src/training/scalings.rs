use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::TrainError;

/// Lower bound on every scaling factor.
pub const SCALING_FLOOR: f64 = 1e-9;

/// Per-state loss scalings in relative state order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalings {
    pub xi_x: Vec<f64>,
    pub xi_dt: Vec<f64>,
    pub xi_f: Vec<f64>,
}

impl Scalings {
    pub fn uniform(n: usize) -> Self {
        Scalings {
            xi_x: vec![1.0; n],
            xi_dt: vec![1.0; n],
            xi_f: vec![1.0; n],
        }
    }
}

/// Population standard deviation of every column by Welford's recurrence.
pub fn column_std(x: ArrayView2<f64>) -> Vec<f64> {
    let mut mean = vec![0.0; x.ncols()];
    let mut m2 = vec![0.0; x.ncols()];
    for (k, row) in x.rows().into_iter().enumerate() {
        let n = (k + 1) as f64;
        for (j, v) in row.iter().enumerate() {
            let d = v - mean[j];
            mean[j] += d / n;
            m2[j] += d * (v - mean[j]);
        }
    }
    let n = x.nrows() as f64;
    m2.into_iter().map(|s| (s / n).sqrt()).collect()
}

/// `xi_x` is the mean standard deviation of the state's group: the first
/// `n_angles` columns are angle differences, the rest frequency deviations.
/// `xi_dt` and `xi_f` are one.
pub fn compute_scalings(targets: ArrayView2<f64>, n_angles: usize) -> Result<Scalings, TrainError> {
    if targets.nrows() == 0 {
        return Err(TrainError::Data("cannot scale an empty dataset".into()));
    }
    let n = targets.ncols();
    if n_angles > n {
        return Err(TrainError::Data("more angle columns than states".into()));
    }
    let std = column_std(targets);
    let group_mean = |s: &[f64]| {
        if s.is_empty() {
            1.0
        } else {
            (s.iter().sum::<f64>() / s.len() as f64).max(SCALING_FLOOR)
        }
    };
    let xi_delta = group_mean(&std[..n_angles]);
    let xi_omega = group_mean(&std[n_angles..]);
    let xi_x = (0..n).map(|i| if i < n_angles { xi_delta } else { xi_omega }).collect();
    Ok(Scalings {
        xi_x,
        ..Scalings::uniform(n)
    })
}
