use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{Mlp, NnError, Scratch};

/// One query `[t, x0, u]`. The bundled studies use a fixed `x0`, leaving
/// `(t, P_dist)` as the features.
#[derive(Debug, Clone, PartialEq)]
pub struct NnInput {
    pub t: f64,
    pub x0: Vec<f64>,
    pub u: Vec<f64>,
}

impl NnInput {
    pub fn new(t: f64, x0: Vec<f64>, u: Vec<f64>) -> Self {
        NnInput { t, x0, u }
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.x0.len() + self.u.len());
        v.push(self.t);
        v.extend(&self.x0);
        v.extend(&self.u);
        v
    }
}

/// Affine maps around the network: `z = (features - shift) / scale` on the
/// way in and `x = offset + scale * y` on the way out. Feature 0 is time.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_offset: Vec<f64>,
    pub output_scale: Vec<f64>,
}

impl Normalization {
    /// Maps each feature range `[lo, hi]` onto `[-1, 1]`.
    pub fn from_ranges(ranges: &[(f64, f64)], output_offset: Vec<f64>, output_scale: Vec<f64>) -> Self {
        Normalization {
            input_shift: ranges.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect(),
            input_scale: ranges.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect(),
            output_offset,
            output_scale,
        }
    }

    pub fn identity(n_in: usize, n_out: usize) -> Self {
        Normalization {
            input_shift: vec![0.0; n_in],
            input_scale: vec![1.0; n_in],
            output_offset: vec![0.0; n_out],
            output_scale: vec![1.0; n_out],
        }
    }

    fn validate(&self, n_in: usize, n_out: usize) -> Result<(), NnError> {
        if self.input_shift.len() != n_in || self.input_scale.len() != n_in {
            return Err(NnError::Shape("input normalization width mismatch".into()));
        }
        if self.output_offset.len() != n_out || self.output_scale.len() != n_out {
            return Err(NnError::Shape("output normalization width mismatch".into()));
        }
        let ok = |v: &[f64]| v.iter().all(|s| s.is_finite() && *s != 0.0);
        if !ok(&self.input_scale) || !ok(&self.output_scale) {
            return Err(NnError::Shape("normalization scales must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// Free-form record of how a model was produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub entries: BTreeMap<String, String>,
}

impl Provenance {
    pub fn with_seed(seed: u64) -> Self {
        Provenance {
            seed: Some(seed),
            entries: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }
}

/// A network together with its input and output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub mlp: Mlp,
    pub norm: Normalization,
    pub provenance: Provenance,
}

impl Surrogate {
    pub fn new(mlp: Mlp, norm: Normalization, provenance: Provenance) -> Result<Self, NnError> {
        norm.validate(mlp.n_in(), mlp.n_out())?;
        Ok(Surrogate {
            mlp,
            norm,
            provenance,
        })
    }

    pub fn n_in(&self) -> usize {
        self.mlp.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.mlp.n_out()
    }

    pub fn normalize(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        if features.ncols() != self.n_in() {
            return Err(NnError::Shape(format!(
                "got {} features, model expects {}",
                features.ncols(),
                self.n_in()
            )));
        }
        let mut z = features.to_owned();
        for (j, mut col) in z.columns_mut().into_iter().enumerate() {
            let (s, c) = (self.norm.input_shift[j], self.norm.input_scale[j]);
            col.mapv_inplace(|v| (v - s) / c);
        }
        Ok(z)
    }

    /// Direction in normalized input space that corresponds to one second.
    pub fn time_direction(&self) -> Array1<f64> {
        let mut d = Array1::zeros(self.n_in());
        d[0] = 1.0 / self.norm.input_scale[0];
        d
    }

    pub fn denormalize_inplace(&self, y: &mut Array2<f64>) {
        for (j, mut col) in y.columns_mut().into_iter().enumerate() {
            let (o, s) = (self.norm.output_offset[j], self.norm.output_scale[j]);
            col.mapv_inplace(|v| o + s * v);
        }
    }

    pub fn scale_tangent_inplace(&self, ydot: &mut Array2<f64>) {
        for (j, mut col) in ydot.columns_mut().into_iter().enumerate() {
            let s = self.norm.output_scale[j];
            col.mapv_inplace(|v| s * v);
        }
    }

    /// States for each feature row.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        let z = self.normalize(features)?;
        let mut y = self.mlp.forward(z.view())?;
        self.denormalize_inplace(&mut y);
        Ok(y)
    }

    /// States and their time derivatives in physical seconds.
    pub fn predict_with_dt(
        &self,
        features: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>), NnError> {
        let z = self.normalize(features)?;
        let dir = self.time_direction();
        let pass = self.mlp.eval(z.view(), Some(dir.view()))?;
        let mut y = pass.output;
        let mut ydot = pass.output_dot.expect("direction was supplied");
        self.denormalize_inplace(&mut y);
        self.scale_tangent_inplace(&mut ydot);
        Ok((y, ydot))
    }

    pub fn scratch(&self) -> QueryScratch {
        QueryScratch {
            z: vec![0.0; self.n_in()],
            inner: self.mlp.scratch(),
        }
    }

    /// Single query without allocation, as timed by the benchmarks.
    pub fn predict_one(&self, features: &[f64], scratch: &mut QueryScratch, out: &mut [f64]) {
        for (j, f) in features.iter().enumerate() {
            scratch.z[j] = (f - self.norm.input_shift[j]) / self.norm.input_scale[j];
        }
        self.mlp.forward_into(&scratch.z, &mut scratch.inner, out);
        for (j, v) in out.iter_mut().enumerate() {
            *v = self.norm.output_offset[j] + self.norm.output_scale[j] * *v;
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryScratch {
    z: Vec<f64>,
    inner: Scratch,
}
