use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::grid::{Disturbance, NetworkModel};
use crate::nn::Surrogate;

/// Mean over rows of `sum_i ((pred_i - target_i) / xi_i)^2`.
pub fn scaled_mse(pred: ArrayView2<f64>, target: ArrayView2<f64>, xi: &[f64]) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "prediction and target shapes differ");
    let n = pred.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for (p, t) in pred.rows().into_iter().zip(target.rows()) {
        let mut row = 0.0;
        for ((a, b), s) in p.iter().zip(t.iter()).zip(xi) {
            let e = (a - b) / s;
            row += e * e;
        }
        total += row;
    }
    total / n as f64
}

/// Per-row summands of [`scaled_mse`].
pub fn pointwise_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>, xi: &[f64]) -> Vec<f64> {
    pred.rows()
        .into_iter()
        .zip(target.rows())
        .map(|(p, t)| {
            p.iter()
                .zip(t.iter())
                .zip(xi)
                .map(|((a, b), s)| ((a - b) / s).powi(2))
                .sum()
        })
        .collect()
}

pub fn loss_x(pred: ArrayView2<f64>, target: ArrayView2<f64>, xi_x: &[f64]) -> f64 {
    scaled_mse(pred, target, xi_x)
}

pub fn loss_dt(pred_deriv: ArrayView2<f64>, target_deriv: ArrayView2<f64>, xi_dt: &[f64]) -> f64 {
    scaled_mse(pred_deriv, target_deriv, xi_dt)
}

/// Residual rows `M dx/dt - f(x, u)` of the relative-angle system, with
/// `inputs` holding `(t, P_dist)` rows.
pub fn physics_residual(
    network: &NetworkModel,
    states: ArrayView2<f64>,
    derivs: ArrayView2<f64>,
    inputs: ArrayView2<f64>,
) -> Result<Array2<f64>, TrainError> {
    let bus = disturbance_bus(network)?;
    let n = network.layout.relative_len();
    if states.ncols() != n || derivs.dim() != states.dim() || inputs.nrows() != states.nrows() {
        return Err(TrainError::Data("physics residual shape mismatch".into()));
    }
    let mass = network.relative_mass();
    let mut ws = network.workspace();
    let mut f = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut out = Array2::zeros(states.dim());
    for r in 0..states.nrows() {
        y.iter_mut().zip(states.row(r)).for_each(|(a, b)| *a = *b);
        network.rhs_relative_into(&y, &Disturbance::new(bus, inputs[(r, 1)]), &mut f, &mut ws);
        for i in 0..n {
            out[(r, i)] = mass[i] * derivs[(r, i)] - f[i];
        }
    }
    Ok(out)
}

/// Physics loss of given states and derivatives.
pub fn loss_f_of(
    network: &NetworkModel,
    states: ArrayView2<f64>,
    derivs: ArrayView2<f64>,
    inputs: ArrayView2<f64>,
    xi_f: &[f64],
) -> Result<f64, TrainError> {
    let r = physics_residual(network, states, derivs, inputs)?;
    Ok(scaled_mse(r.view(), Array2::zeros(r.dim()).view(), xi_f))
}

/// Physics loss of a surrogate at collocation inputs `(t, P_dist)`.
pub fn loss_f(
    model: &Surrogate,
    collocation_inputs: ArrayView2<f64>,
    network: &NetworkModel,
    xi_f: &[f64],
) -> Result<f64, TrainError> {
    let (x, dx) = model.predict_with_dt(collocation_inputs)?;
    loss_f_of(network, x.view(), dx.view(), collocation_inputs, xi_f)
}

/// Residual and its pullback to the state for the physics loss gradient.
pub(crate) struct PhysicsPullback {
    pub value: f64,
    /// d loss / d x for every row.
    pub x_bar: Array2<f64>,
    /// d loss / d (dx/dt) for every row.
    pub dx_bar: Array2<f64>,
}

pub(crate) fn physics_pullback(
    network: &NetworkModel,
    states: ArrayView2<f64>,
    derivs: ArrayView2<f64>,
    inputs: ArrayView2<f64>,
    xi_f: &[f64],
) -> Result<PhysicsPullback, TrainError> {
    let bus = disturbance_bus(network)?;
    let n = network.layout.relative_len();
    let rows = states.nrows();
    let mass = network.relative_mass();
    let mut ws = network.workspace();
    let mut jac = DMatrix::zeros(n, n);
    let mut abs_jac = DMatrix::zeros(network.layout.len(), network.layout.len());
    let mut f = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut x_bar = Array2::zeros((rows, n));
    let mut dx_bar = Array2::zeros((rows, n));
    let mut total = 0.0;
    let scale = 2.0 / rows.max(1) as f64;
    for r in 0..rows {
        y.iter_mut().zip(states.row(r)).for_each(|(a, b)| *a = *b);
        let dist = Disturbance::new(bus, inputs[(r, 1)]);
        network.rhs_relative_into(&y, &dist, &mut f, &mut ws);
        network.jacobian_relative_into(&y, &mut jac, &mut abs_jac, &mut ws);
        let mut row = 0.0;
        for i in 0..n {
            let res = (mass[i] * derivs[(r, i)] - f[i]) / xi_f[i];
            row += res * res;
            g[i] = scale * res / xi_f[i];
            dx_bar[(r, i)] = mass[i] * g[i];
        }
        total += row;
        for k in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += jac[(i, k)] * g[i];
            }
            x_bar[(r, k)] = -acc;
        }
    }
    Ok(PhysicsPullback {
        value: total / rows.max(1) as f64,
        x_bar,
        dx_bar,
    })
}

fn disturbance_bus(network: &NetworkModel) -> Result<usize, TrainError> {
    network
        .default_disturbance_bus
        .ok_or_else(|| TrainError::Data(format!("case {} has no disturbance bus", network.name)))
}

/// Weights of the combined loss `L_x + lambda_dt L_dt + lambda_f(E) L_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dt: f64,
    pub lambda_f0: f64,
    pub lambda_f_max: f64,
    pub fade_speed: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.lambda_dt >= 0.0
            && self.lambda_f0 >= 0.0
            && self.lambda_f_max >= 0.0
            && self.lambda_f0 <= self.lambda_f_max
            && self.fade_speed > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("invalid loss weights {self:?}")))
        }
    }
}

/// `min(lambda_f_max, lambda_f0 * 10^(epoch / fade_speed))`.
pub fn lambda_f_schedule(epoch: usize, w: &LossWeights) -> f64 {
    let grown = w.lambda_f0 * 10f64.powf(epoch as f64 / w.fade_speed);
    grown.min(w.lambda_f_max)
}
