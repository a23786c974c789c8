use std::collections::BTreeMap;
use std::ops::Range;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Largest absolute error over the columns in `group`.
pub fn max_ae(pred: ArrayView2<f64>, target: ArrayView2<f64>, group: Range<usize>) -> Result<f64, EvalError> {
    if pred.dim() != target.dim() {
        return Err(EvalError::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if group.end > pred.ncols() {
        return Err(EvalError::Shape(format!(
            "group {group:?} exceeds {} columns",
            pred.ncols()
        )));
    }
    let mut m = 0.0_f64;
    for (p, t) in pred.rows().into_iter().zip(target.rows()) {
        for k in group.clone() {
            m = m.max((p[k] - t[k]).abs());
        }
    }
    Ok(m)
}

/// Max AE of the angle group and the frequency group.
pub fn group_max_ae(
    pred: ArrayView2<f64>,
    target: ArrayView2<f64>,
    n_angles: usize,
) -> Result<(f64, f64), EvalError> {
    let n = pred.ncols();
    Ok((
        max_ae(pred, target, 0..n_angles)?,
        max_ae(pred, target, n_angles..n)?,
    ))
}

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    T,
    P,
}

impl Axis {
    fn column(self) -> usize {
        match self {
            Axis::T => 0,
            Axis::P => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::T => "t",
            Axis::P => "p",
        }
    }
}

/// Quantile band of per-point losses at one axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub axis: Axis,
    pub value: f64,
    pub q0: f64,
    pub q10: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q90: f64,
    pub q100: f64,
}

/// Groups per-point losses by the value of `axis` in `inputs` (rows of
/// `(t, P)`) and summarises each group, ordered by axis value.
pub fn error_distribution(
    losses: &[f64],
    inputs: ArrayView2<f64>,
    axis: Axis,
) -> Result<Vec<DistributionRow>, EvalError> {
    if losses.len() != inputs.nrows() {
        return Err(EvalError::Shape(format!(
            "{} losses for {} inputs",
            losses.len(),
            inputs.nrows()
        )));
    }
    // keyed by bit pattern of a non-negative float, which sorts numerically
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (l, row) in losses.iter().zip(inputs.rows()) {
        let v = row[axis.column()];
        if !(v >= 0.0) {
            return Err(EvalError::Shape(format!("axis value {v} is negative")));
        }
        groups.entry((v + 0.0).to_bits()).or_default().push(*l);
    }
    Ok(groups
        .into_iter()
        .map(|(bits, mut vals)| {
            vals.sort_by(f64::total_cmp);
            let q = |p| quantile_sorted(&vals, p);
            DistributionRow {
                axis,
                value: f64::from_bits(bits),
                q0: q(0.0),
                q10: q(0.1),
                q25: q(0.25),
                median: q(0.5),
                q75: q(0.75),
                q90: q(0.9),
                q100: q(1.0),
            }
        })
        .collect())
}

/// Accuracy of one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub scenario: String,
    pub seed: Option<u64>,
    pub max_ae_delta: f64,
    pub max_ae_domega: f64,
}
