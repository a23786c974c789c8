use ndarray::{Array1, Array2, ArrayView2};

use super::losses::{physics_pullback, scaled_mse};
use super::{Scalings, TrainError};
use crate::grid::NetworkModel;
use crate::nn::Surrogate;

/// Loss value with its parts and the flat parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    pub lx: f64,
    pub ldt: Option<f64>,
    pub lf: Option<f64>,
}

/// Full-batch objective `L_x + lambda_dt L_dt + lambda_f L_f` as a function of
/// the network parameters. Terms with zero weight are not evaluated.
pub struct Objective<'a> {
    model: Surrogate,
    data_z: Array2<f64>,
    data_x: Array2<f64>,
    data_dx: Option<Array2<f64>>,
    colloc_inputs: Option<Array2<f64>>,
    colloc_z: Option<Array2<f64>>,
    network: &'a NetworkModel,
    direction: Array1<f64>,
    pub scalings: Scalings,
    pub lambda_dt: f64,
    pub lambda_f: f64,
}

impl<'a> Objective<'a> {
    /// `inputs` and `collocation` hold raw `(t, P_dist)` rows; `model`
    /// supplies the architecture and normalization.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: Surrogate,
        inputs: ArrayView2<f64>,
        targets: ArrayView2<f64>,
        target_derivs: Option<ArrayView2<f64>>,
        collocation: Option<ArrayView2<f64>>,
        network: &'a NetworkModel,
        scalings: Scalings,
        lambda_dt: f64,
        lambda_f: f64,
    ) -> Result<Self, TrainError> {
        if targets.ncols() != model.n_out() || targets.nrows() != inputs.nrows() {
            return Err(TrainError::Data("targets do not match the model".into()));
        }
        let data_z = model.normalize(inputs)?;
        let colloc_z = collocation.map(|c| model.normalize(c)).transpose()?;
        Ok(Objective {
            direction: model.time_direction(),
            data_z,
            data_x: targets.to_owned(),
            data_dx: target_derivs.map(|d| d.to_owned()),
            colloc_inputs: collocation.map(|c| c.to_owned()),
            colloc_z,
            model,
            network,
            scalings,
            lambda_dt,
            lambda_f,
        })
    }

    pub fn n_params(&self) -> usize {
        self.model.mlp.n_params()
    }

    pub fn model(&self) -> &Surrogate {
        &self.model
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), TrainError> {
        self.model.mlp.set_flat(params)?;
        Ok(())
    }

    /// Loss and gradient at `params`.
    pub fn evaluate(&mut self, params: &[f64]) -> Result<Evaluation, TrainError> {
        self.set_params(params)?;
        let model = &self.model;
        let out_scale = &model.norm.output_scale;
        let use_dt = self.lambda_dt > 0.0;
        let use_f = self.lambda_f > 0.0;

        let pass = model
            .mlp
            .eval(self.data_z.view(), use_dt.then(|| self.direction.view()))?;
        let mut x = pass.output.clone();
        model.denormalize_inplace(&mut x);
        let n = x.nrows().max(1) as f64;
        let xi_x = &self.scalings.xi_x;
        let lx = scaled_mse(x.view(), self.data_x.view(), xi_x);
        let mut y_bar = Array2::zeros(x.dim());
        for ((b, (p, t)), j) in y_bar
            .iter_mut()
            .zip(x.iter().zip(self.data_x.iter()))
            .zip((0..x.ncols()).cycle())
        {
            *b = 2.0 * (p - t) / (xi_x[j] * xi_x[j]) * out_scale[j] / n;
        }
        let mut value = lx;
        let mut ldt = None;
        let mut ydot_bar = None;
        if use_dt {
            let target = self
                .data_dx
                .as_ref()
                .ok_or_else(|| TrainError::Data("derivative loss needs derivative targets".into()))?;
            let mut dx = pass.output_dot.clone().expect("direction supplied");
            model.scale_tangent_inplace(&mut dx);
            let xi = &self.scalings.xi_dt;
            let l = scaled_mse(dx.view(), target.view(), xi);
            let mut bar = Array2::zeros(dx.dim());
            for ((b, (p, t)), j) in bar
                .iter_mut()
                .zip(dx.iter().zip(target.iter()))
                .zip((0..dx.ncols()).cycle())
            {
                *b = self.lambda_dt * 2.0 * (p - t) / (xi[j] * xi[j]) * out_scale[j] / n;
            }
            value += self.lambda_dt * l;
            ldt = Some(l);
            ydot_bar = Some(bar);
        }
        let mut grad = model
            .mlp
            .backward(&pass, Some(y_bar.view()), ydot_bar.as_ref().map(|b| b.view()))?;

        let mut lf = None;
        if use_f {
            let (cz, cin) = match (&self.colloc_z, &self.colloc_inputs) {
                (Some(z), Some(i)) => (z, i),
                _ => return Err(TrainError::Data("physics loss needs collocation points".into())),
            };
            let cpass = model.mlp.eval(cz.view(), Some(self.direction.view()))?;
            let mut cx = cpass.output.clone();
            model.denormalize_inplace(&mut cx);
            let mut cdx = cpass.output_dot.clone().expect("direction supplied");
            model.scale_tangent_inplace(&mut cdx);
            let pb = physics_pullback(self.network, cx.view(), cdx.view(), cin.view(), &self.scalings.xi_f)?;
            let mut yb = pb.x_bar;
            let mut ydb = pb.dx_bar;
            for mut row in yb.rows_mut() {
                for (v, s) in row.iter_mut().zip(out_scale) {
                    *v *= self.lambda_f * s;
                }
            }
            for mut row in ydb.rows_mut() {
                for (v, s) in row.iter_mut().zip(out_scale) {
                    *v *= self.lambda_f * s;
                }
            }
            let g = model.mlp.backward(&cpass, Some(yb.view()), Some(ydb.view()))?;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
            value += self.lambda_f * pb.value;
            lf = Some(pb.value);
        }
        Ok(Evaluation {
            value,
            grad,
            lx,
            ldt,
            lf,
        })
    }
}
