use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::NnError;

/// Hidden-layer activation. `Identity` exists for closed-form checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Identity => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
        }
    }
}

/// Fully connected network `y = W_{K+1} z_K + b_{K+1}`, `z_k = act(W_k z_{k-1} + b_k)`.
///
/// Weights are stored as `(fan_out, fan_in)` matrices. The flat parameter
/// order is layer by layer, weights row-major followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activation: Activation,
}

/// Cached intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Pass {
    input: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    /// Tangents of the pre-activations and activations along the input direction.
    hidden_adot: Vec<Array2<f64>>,
    hidden_zdot: Vec<Array2<f64>>,
    input_dot: Option<Array1<f64>>,
    pub output: Array2<f64>,
    pub output_dot: Option<Array2<f64>>,
}

/// Preallocated buffers for single-sample evaluation.
#[derive(Debug, Clone)]
pub struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Mlp {
    pub fn new(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activation: Activation,
    ) -> Result<Self, NnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NnError::Shape("need one bias per weight matrix".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().unwrap() || w.nrows() != b.len() || w.nrows() == 0 {
                return Err(NnError::Shape(format!("layer {k} does not chain")));
            }
            dims.push(w.nrows());
        }
        if dims[0] == 0 {
            return Err(NnError::Shape("input width must be positive".into()));
        }
        Ok(Mlp {
            dims,
            weights: weights.into_iter().map(|w| w.as_standard_layout().into_owned()).collect(),
            biases,
            activation,
        })
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self, NnError> {
        check_dims(dims)?;
        let weights = dims.windows(2).map(|d| Array2::zeros((d[1], d[0]))).collect();
        let biases = dims[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Mlp::new(weights, biases, activation)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_glorot(dims: &[usize], seed: u64) -> Result<Self, NnError> {
        let mut net = Mlp::zeros(dims, Activation::Tanh)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut net.weights {
            let bound = glorot_bound(w.ncols(), w.nrows());
            w.mapv_inplace(|_| rng.gen_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_in(&self) -> usize {
        self.dims[0]
    }

    pub fn n_out(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn n_params(&self) -> usize {
        self.dims.windows(2).map(|d| d[1] * (d[0] + 1)).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            for v in w.iter_mut() {
                *v = flat[pos];
                pos += 1;
            }
            for v in b.iter_mut() {
                *v = flat[pos];
                pos += 1;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.n_in() {
            return Err(NnError::Shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.n_in()
            )));
        }
        Ok(())
    }

    /// Batched forward pass, one sample per row.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.eval(x, None)?.output)
    }

    /// Forward pass that keeps what the reverse sweep needs. With a
    /// `direction`, also propagates the input tangent (forward mode).
    pub fn eval(
        &self,
        x: ArrayView2<f64>,
        direction: Option<ArrayView1<f64>>,
    ) -> Result<Pass, NnError> {
        self.check_input(&x)?;
        if let Some(d) = &direction {
            if d.len() != self.n_in() {
                return Err(NnError::Shape("direction width mismatch".into()));
            }
        }
        let n_layers = self.weights.len();
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut hidden_adot = Vec::new();
        let mut hidden_zdot = Vec::new();
        let mut z = x.to_owned();
        // tangent of the input is the same direction for every row
        let mut zdot: Option<Array2<f64>> = None;
        for k in 0..n_layers {
            let w = &self.weights[k];
            let mut a = z.dot(&w.t());
            a += &self.biases[k];
            let adot = match (&zdot, &direction) {
                (Some(zd), _) => Some(zd.dot(&w.t())),
                (None, Some(d)) => {
                    let row = w.dot(d);
                    Some(row.broadcast((z.nrows(), row.len())).unwrap().to_owned())
                }
                (None, None) => None,
            };
            if k + 1 == n_layers {
                return Ok(Pass {
                    input: x.to_owned(),
                    hidden,
                    hidden_adot,
                    hidden_zdot,
                    input_dot: direction.map(|d| d.to_owned()),
                    output: a,
                    output_dot: adot,
                });
            }
            let act = self.activation;
            a.mapv_inplace(|v| act.apply(v));
            if let Some(ad) = adot {
                let mut zd = ad.clone();
                if act == Activation::Tanh {
                    ndarray::Zip::from(&mut zd)
                        .and(&a)
                        .for_each(|d, &t| *d *= 1.0 - t * t);
                }
                hidden_adot.push(ad);
                hidden_zdot.push(zd.clone());
                zdot = Some(zd);
            }
            hidden.push(a.clone());
            z = a;
        }
        unreachable!("loop returns at the output layer")
    }

    /// Reverse sweep for upstream seeds on the output and on its tangent.
    /// Returns the flat parameter gradient of `<y_bar, y> + <ydot_bar, ydot>`.
    pub fn backward(
        &self,
        pass: &Pass,
        y_bar: Option<ArrayView2<f64>>,
        ydot_bar: Option<ArrayView2<f64>>,
    ) -> Result<Vec<f64>, NnError> {
        let n = pass.output.nrows();
        let shape = (n, self.n_out());
        for seed in [&y_bar, &ydot_bar].into_iter().flatten() {
            if seed.dim() != shape {
                return Err(NnError::Shape("upstream seed shape mismatch".into()));
            }
        }
        if ydot_bar.is_some() && pass.output_dot.is_none() {
            return Err(NnError::Shape("tangent seed needs a pass with a direction".into()));
        }
        let n_layers = self.weights.len();
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(n_layers);
        let mut a_bar: Option<Array2<f64>> = y_bar.map(|v| v.to_owned());
        let mut adot_bar: Option<Array2<f64>> = ydot_bar.map(|v| v.to_owned());
        for k in (0..n_layers).rev() {
            let w = &self.weights[k];
            let (z_prev, zdot_prev): (ArrayView2<f64>, Option<ArrayView2<f64>>) = if k == 0 {
                (pass.input.view(), None)
            } else {
                (
                    pass.hidden[k - 1].view(),
                    pass.hidden_zdot.get(k - 1).map(|m| m.view()),
                )
            };
            let mut gw = Array2::zeros(w.dim());
            let mut gb = Array1::zeros(w.nrows());
            if let Some(ab) = &a_bar {
                gw += &ab.t().dot(&z_prev);
                gb += &ab.sum_axis(Axis(0));
            }
            if let Some(adb) = &adot_bar {
                match zdot_prev {
                    Some(zd) => gw += &adb.t().dot(&zd),
                    None => {
                        // input tangent is the constant direction
                        let d = pass.input_dot.as_ref().unwrap();
                        let s = adb.sum_axis(Axis(0));
                        for (i, si) in s.iter().enumerate() {
                            for (j, dj) in d.iter().enumerate() {
                                gw[(i, j)] += si * dj;
                            }
                        }
                    }
                }
            }
            grads.push((gw, gb));
            if k == 0 {
                break;
            }
            let z_bar = a_bar.as_ref().map(|ab| ab.dot(w));
            let zdot_bar = adot_bar.as_ref().map(|adb| adb.dot(w));
            let z = &pass.hidden[k - 1];
            let (new_a_bar, new_adot_bar) = match self.activation {
                Activation::Identity => (z_bar, zdot_bar),
                Activation::Tanh => {
                    let s = z.mapv(|t| 1.0 - t * t);
                    let new_adot_bar = zdot_bar.as_ref().map(|zdb| zdb * &s);
                    let mut total = z_bar.unwrap_or_else(|| Array2::zeros(z.dim()));
                    if let Some(zdb) = &zdot_bar {
                        let adot = &pass.hidden_adot[k - 1];
                        ndarray::Zip::from(&mut total)
                            .and(z)
                            .and(adot)
                            .and(zdb)
                            .for_each(|t, &zz, &ad, &zb| *t -= 2.0 * zz * ad * zb);
                    }
                    total *= &s;
                    (Some(total), new_adot_bar)
                }
            };
            a_bar = new_a_bar;
            adot_bar = new_adot_bar;
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads.iter().rev() {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        Ok(flat)
    }

    /// Gradient of `<upstream, forward(x)>` with respect to every parameter.
    pub fn grad_params(
        &self,
        x: ArrayView2<f64>,
        upstream: ArrayView2<f64>,
    ) -> Result<Vec<f64>, NnError> {
        let pass = self.eval(x, None)?;
        self.backward(&pass, Some(upstream), None)
    }

    /// Directional derivative of the output along `direction` in input space.
    pub fn output_tangent(
        &self,
        x: ArrayView2<f64>,
        direction: ArrayView1<f64>,
    ) -> Result<Array2<f64>, NnError> {
        Ok(self.eval(x, Some(direction))?.output_dot.unwrap())
    }

    /// Gradient of `<upstream, output_tangent(x, direction)>` by forward-over-reverse.
    pub fn grad_params_of_tangent(
        &self,
        x: ArrayView2<f64>,
        direction: ArrayView1<f64>,
        upstream: ArrayView2<f64>,
    ) -> Result<Vec<f64>, NnError> {
        let pass = self.eval(x, Some(direction))?;
        self.backward(&pass, None, Some(upstream))
    }

    pub fn scratch(&self) -> Scratch {
        let w = *self.dims.iter().max().unwrap();
        Scratch {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }

    /// Allocation-free single-sample forward pass.
    pub fn forward_into(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        let n_layers = self.weights.len();
        scratch.a[..x.len()].copy_from_slice(x);
        let mut width = x.len();
        for k in 0..n_layers {
            let w = self.weights[k].as_slice().expect("standard layout");
            let b = self.biases[k].as_slice().expect("contiguous");
            let rows = b.len();
            let last = k + 1 == n_layers;
            for r in 0..rows {
                let row = &w[r * width..(r + 1) * width];
                let mut acc = b[r];
                for (wi, zi) in row.iter().zip(&scratch.a[..width]) {
                    acc += wi * zi;
                }
                if last {
                    out[r] = acc;
                } else {
                    scratch.b[r] = self.activation.apply(acc);
                }
            }
            std::mem::swap(&mut scratch.a, &mut scratch.b);
            width = rows;
        }
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn check_dims(dims: &[usize]) -> Result<(), NnError> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(NnError::Shape(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}
