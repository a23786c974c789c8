use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::grid::{find_equilibrium, Disturbance, NetworkModel};
use crate::nn::Surrogate;
use crate::solver::{simulate_from, SolverConfig};

/// Warm-up calls discarded before measuring.
pub const WARMUP: usize = 5;
/// Fewest measured repetitions per cell.
pub const MIN_REPS: usize = 30;

/// Median wall time of one query kind at one `(t, P)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub case: String,
    pub method: String,
    pub setting: String,
    pub t: f64,
    pub p: f64,
    pub median_s: f64,
    pub reps: usize,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn measure<F: FnMut() -> Result<(), EvalError>>(reps: usize, mut f: F) -> Result<f64, EvalError> {
    for _ in 0..WARMUP {
        f()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps.max(MIN_REPS) {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(median(&samples))
}

/// Single forward passes of `model` at each `(t, P)` query.
pub fn time_nn(
    model: &Surrogate,
    case: &str,
    queries: &[(f64, f64)],
    reps: usize,
) -> Result<Vec<TimingRow>, EvalError> {
    let mut scratch = model.scratch();
    let mut out = vec![0.0; model.n_out()];
    let setting = format!("{:?}", model.mlp.dims());
    queries
        .iter()
        .map(|&(t, p)| {
            let median_s = measure(reps, || {
                model.predict_one(std::hint::black_box(&[t, p]), &mut scratch, &mut out);
                std::hint::black_box(&out);
                Ok(())
            })?;
            Ok(TimingRow {
                case: case.to_string(),
                method: "nn".into(),
                setting: setting.clone(),
                t,
                p,
                median_s,
                reps: reps.max(MIN_REPS),
            })
        })
        .collect()
}

/// Integrations from the undisturbed equilibrium up to each query time.
pub fn time_solver(
    network: &NetworkModel,
    queries: &[(f64, f64)],
    config: &SolverConfig,
    reps: usize,
) -> Result<Vec<TimingRow>, EvalError> {
    let bus = network
        .default_disturbance_bus
        .ok_or_else(|| EvalError::Config(format!("case {} has no disturbance bus", network.name)))?;
    let x0 = find_equilibrium(network, &Disturbance::none(bus), &Default::default())?.pack();
    queries
        .iter()
        .map(|&(t, p)| {
            let dist = Disturbance::new(bus, p);
            let median_s = measure(reps, || {
                let traj = simulate_from(network, dist, &x0, t, config)?;
                std::hint::black_box(traj.states.last());
                Ok(())
            })?;
            Ok(TimingRow {
                case: network.name.clone(),
                method: "solver".into(),
                setting: format!("eps={:e}", config.abs_tol.max(config.rel_tol)),
                t,
                p,
                median_s,
                reps: reps.max(MIN_REPS),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
