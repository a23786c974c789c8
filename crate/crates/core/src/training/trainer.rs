use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use super::lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsState};
use super::losses::{lambda_f_schedule, loss_x, LossWeights};
use super::objective::Objective;
use super::scalings::{compute_scalings, Scalings};
use super::TrainError;
use crate::datasets::{Dataset, Scenario};
use crate::grid::NetworkModel;
use crate::nn::{Mlp, Normalization, Provenance, Surrogate};

/// Which regularisation terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavour {
    Vanilla,
    Dtnn,
    Pinn,
}

impl Flavour {
    pub const ALL: [Flavour; 3] = [Flavour::Vanilla, Flavour::Dtnn, Flavour::Pinn];

    pub fn name(self) -> &'static str {
        match self {
            Flavour::Vanilla => "vanilla",
            Flavour::Dtnn => "dtnn",
            Flavour::Pinn => "pinn",
        }
    }
}

impl fmt::Display for Flavour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Flavour {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Flavour::Vanilla),
            "dtnn" => Ok(Flavour::Dtnn),
            "pinn" => Ok(Flavour::Pinn),
            _ => Err(TrainError::Config(format!("unknown flavour '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub lambda_dt: f64,
    pub lambda_f0: f64,
    pub lambda_f_max: f64,
    pub fade_speed: f64,
    pub learning_rate: f64,
    pub history_size: usize,
    pub max_iterations: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub tolerance_grad: f64,
    pub tolerance_change: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            hidden_layers: 5,
            neurons: 32,
            lambda_dt: 0.0,
            lambda_f0: 0.005,
            lambda_f_max: 0.0,
            fade_speed: 15.0,
            learning_rate: 1.0,
            history_size: 140,
            max_iterations: 22,
            max_epochs: 400,
            patience: 100,
            seed: 0,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
        }
    }
}

impl Hyperparameters {
    /// Selected values per flavour, for scenarios A to D and for E.
    pub fn preset(flavour: Flavour, scenario: Scenario) -> Self {
        let e = scenario == Scenario::E;
        let base = Hyperparameters::default();
        match (flavour, e) {
            (Flavour::Vanilla, false) => Hyperparameters {
                learning_rate: 1.0,
                history_size: 140,
                max_iterations: 22,
                ..base
            },
            (Flavour::Vanilla, true) => Hyperparameters {
                learning_rate: 1.6,
                history_size: 140,
                max_iterations: 22,
                ..base
            },
            (Flavour::Dtnn, false) => Hyperparameters {
                lambda_dt: 0.3,
                learning_rate: 0.5,
                history_size: 120,
                max_iterations: 23,
                ..base
            },
            (Flavour::Dtnn, true) => Hyperparameters {
                lambda_dt: 1.0,
                learning_rate: 2.0,
                history_size: 120,
                max_iterations: 20,
                ..base
            },
            (Flavour::Pinn, false) => Hyperparameters {
                lambda_dt: 0.01,
                lambda_f_max: 0.5,
                fade_speed: 15.0,
                learning_rate: 1.2,
                history_size: 120,
                max_iterations: 20,
                ..base
            },
            (Flavour::Pinn, true) => Hyperparameters {
                lambda_dt: 0.01,
                lambda_f_max: 0.01,
                fade_speed: 15.0,
                learning_rate: 1.0,
                history_size: 120,
                max_iterations: 19,
                ..base
            },
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_dt: self.lambda_dt,
            lambda_f0: self.lambda_f0,
            lambda_f_max: self.lambda_f_max,
            fade_speed: self.fade_speed,
        }
    }

    /// Checks ranges and that only the flavour's terms carry weight.
    pub fn validate(&self, flavour: Flavour) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.hidden_layers == 0 || self.neurons == 0 {
            return bad("network needs at least one hidden layer and neuron".into());
        }
        if !(self.learning_rate > 0.0) || self.max_iterations == 0 || self.max_epochs == 0 {
            return bad("learning rate, iterations and epochs must be positive".into());
        }
        let uses_f = self.lambda_f_max > 0.0;
        match flavour {
            Flavour::Vanilla if self.lambda_dt != 0.0 || uses_f => {
                bad(format!("vanilla training takes no regularisation (lambda_dt = {}, lambda_f_max = {})", self.lambda_dt, self.lambda_f_max))
            }
            Flavour::Dtnn if self.lambda_dt <= 0.0 || uses_f => {
                bad("dtnn needs lambda_dt > 0 and lambda_f_max = 0".into())
            }
            Flavour::Pinn if self.lambda_dt <= 0.0 || !uses_f => {
                bad("pinn needs lambda_dt > 0 and lambda_f_max > 0".into())
            }
            Flavour::Pinn => self.loss_weights().validate(),
            _ => Ok(()),
        }
    }

    pub fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            lr: self.learning_rate,
            history_size: self.history_size,
            max_iter: self.max_iterations,
            tolerance_grad: self.tolerance_grad,
            tolerance_change: self.tolerance_change,
            ..LbfgsConfig::default()
        }
    }

    pub fn layer_dims(&self, n_in: usize, n_out: usize) -> Vec<usize> {
        let mut dims = vec![n_in];
        dims.extend(std::iter::repeat(self.neurons).take(self.hidden_layers));
        dims.push(n_out);
        dims
    }
}

/// Losses after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda_f: Option<f64>,
    pub train_loss: f64,
    pub train_lx: f64,
    pub train_ldt: Option<f64>,
    pub train_lf: Option<f64>,
    pub val_lx: f64,
    pub iterations: usize,
    pub func_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub flavour: Flavour,
    pub scenario: String,
    pub case: String,
    pub hyperparameters: Hyperparameters,
    pub scalings: Scalings,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_lx: f64,
    pub stopped_early: bool,
    /// Wall time of every epoch; not part of the deterministic outputs.
    #[serde(skip)]
    pub epoch_wall_s: Vec<f64>,
}

impl TrainRecord {
    pub fn total_wall_s(&self) -> f64 {
        self.epoch_wall_s.iter().sum()
    }

    fn opt(v: Option<f64>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }

    /// Per-epoch losses as CSV. Absent terms are left empty.
    pub fn losses_csv(&self) -> String {
        let mut s = String::from(
            "epoch,lambda_f,train_loss,train_lx,train_ldt,train_lf,val_lx,iterations,func_evals\n",
        );
        for e in &self.epochs {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.epoch,
                Self::opt(e.lambda_f),
                e.train_loss,
                e.train_lx,
                Self::opt(e.train_ldt),
                Self::opt(e.train_lf),
                e.val_lx,
                e.iterations,
                e.func_evals
            ));
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("epoch,wall_s\n");
        for (e, w) in self.epochs.iter().zip(&self.epoch_wall_s) {
            s.push_str(&format!("{},{}\n", e.epoch, w));
        }
        s
    }

    /// Writes `<stem>_record.csv`, `<stem>_summary.json` and `<stem>_timing.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), TrainError> {
        let io = |e: std::io::Error| TrainError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(format!("{stem}_record.csv")), self.losses_csv()).map_err(io)?;
        let json = serde_json::to_string_pretty(self).map_err(|e| TrainError::Io(e.to_string()))?;
        std::fs::write(dir.join(format!("{stem}_summary.json")), json).map_err(io)?;
        std::fs::write(dir.join(format!("{stem}_timing.csv")), self.timing_csv()).map_err(io)?;
        Ok(())
    }
}

/// Data for one training run.
pub struct TrainSetup<'a> {
    pub network: &'a NetworkModel,
    pub train: &'a Dataset,
    pub validation: &'a Dataset,
    /// Required when the physics term is active.
    pub collocation: Option<&'a Dataset>,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Surrogate,
    pub record: TrainRecord,
}

fn targets(ds: &Dataset) -> Result<ndarray::ArrayView2<'_, f64>, TrainError> {
    ds.targets
        .as_ref()
        .map(|t| t.view())
        .ok_or_else(|| TrainError::Data(format!("dataset {} has no targets", ds.scenario)))
}

/// Untrained surrogate with output normalization from the training targets.
pub fn initial_model(
    train: &Dataset,
    scalings: &Scalings,
    hyper: &Hyperparameters,
    flavour: Flavour,
) -> Result<Surrogate, TrainError> {
    let x = targets(train)?;
    let offset = x
        .mean_axis(Axis(0))
        .ok_or_else(|| TrainError::Data("empty training set".into()))?
        .to_vec();
    let dims = hyper.layer_dims(train.inputs.ncols(), x.ncols());
    let mlp = Mlp::init_glorot(&dims, hyper.seed)?;
    let norm = Normalization::from_ranges(
        &[train.grid.t_range, train.grid.p_range],
        offset,
        scalings.xi_x.clone(),
    );
    let mut prov = Provenance::with_seed(hyper.seed);
    prov.set("flavour", flavour);
    prov.set("scenario", &train.scenario);
    prov.set("case", &train.case);
    prov.set(
        "hyperparameters",
        serde_json::to_string(hyper).map_err(|e| TrainError::Io(e.to_string()))?,
    );
    Ok(Surrogate::new(mlp, norm, prov)?)
}

/// Epoch loop: one L-BFGS call per epoch, validation after each, and the
/// parameters of the best validation epoch kept.
pub fn train(
    setup: &TrainSetup<'_>,
    flavour: Flavour,
    hyper: &Hyperparameters,
) -> Result<TrainOutcome, TrainError> {
    hyper.validate(flavour)?;
    let n_angles = setup.network.layout.relative_angles();
    let x_train = targets(setup.train)?;
    let x_val = targets(setup.validation)?;
    let scalings = compute_scalings(x_train, n_angles)?;
    let model = initial_model(setup.train, &scalings, hyper, flavour)?;
    let weights = hyper.loss_weights();
    let uses_f = flavour == Flavour::Pinn;
    let collocation = if uses_f {
        Some(
            setup
                .collocation
                .ok_or_else(|| TrainError::Data("physics loss needs collocation points".into()))?
                .inputs
                .view(),
        )
    } else {
        None
    };
    let lambda_dt = if flavour == Flavour::Vanilla { 0.0 } else { hyper.lambda_dt };
    let mut objective = Objective::new(
        model.clone(),
        setup.train.inputs.view(),
        x_train,
        setup.train.target_derivs.as_ref().map(|d| d.view()),
        collocation,
        setup.network,
        scalings.clone(),
        lambda_dt,
        if uses_f { lambda_f_schedule(0, &weights) } else { 0.0 },
    )?;
    let cfg = hyper.lbfgs();
    let mut params = model.mlp.to_flat();
    let mut state = LbfgsState::default();
    let mut best_params = params.clone();
    let mut record = TrainRecord {
        flavour,
        scenario: setup.train.scenario.clone(),
        case: setup.train.case.clone(),
        hyperparameters: hyper.clone(),
        scalings: scalings.clone(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_lx: f64::INFINITY,
        stopped_early: false,
        epoch_wall_s: Vec::new(),
    };
    let mut eval_model = model;
    for epoch in 0..hyper.max_epochs {
        let start = Instant::now();
        let lambda_f = uses_f.then(|| lambda_f_schedule(epoch, &weights));
        objective.lambda_f = lambda_f.unwrap_or(0.0);
        let trace = lbfgs_minimize(
            |p: &[f64]| objective.evaluate(p).map(|e| (e.value, e.grad)),
            &mut params,
            &mut state,
            &cfg,
        )
        .map_err(|e| diagnose(e, epoch, &objective, setup.train))?;
        let parts = objective.evaluate(&params)?;
        eval_model.mlp.set_flat(&params)?;
        let pred = eval_model.predict(setup.validation.inputs.view())?;
        let val_lx = loss_x(pred.view(), x_val, &scalings.xi_x);
        record.epoch_wall_s.push(start.elapsed().as_secs_f64());
        if !parts.value.is_finite() || !val_lx.is_finite() {
            return Err(non_finite_dump(epoch, &parts.value, &pred));
        }
        record.epochs.push(EpochRecord {
            epoch,
            lambda_f,
            train_loss: parts.value,
            train_lx: parts.lx,
            train_ldt: parts.ldt,
            train_lf: parts.lf,
            val_lx,
            iterations: trace.iterations.len(),
            func_evals: trace.func_evals,
        });
        if val_lx < record.best_val_lx {
            record.best_val_lx = val_lx;
            record.best_epoch = epoch;
            best_params.copy_from_slice(&params);
        } else if epoch - record.best_epoch >= hyper.patience {
            record.stopped_early = true;
            break;
        }
    }
    eval_model.mlp.set_flat(&best_params)?;
    eval_model.provenance.set("best_epoch", record.best_epoch);
    Ok(TrainOutcome {
        model: eval_model,
        record,
    })
}

fn diagnose(err: TrainError, epoch: usize, objective: &Objective<'_>, train: &Dataset) -> TrainError {
    let TrainError::NonFinite(msg) = err else {
        return err;
    };
    // rows whose inputs, targets or predictions are not finite
    let pred = objective.model().predict(train.inputs.view()).ok();
    let mut bad = Vec::new();
    for r in 0..train.len() {
        let input_ok = train.inputs.row(r).iter().all(|v| v.is_finite());
        let target_ok = train
            .targets
            .as_ref()
            .is_none_or(|t| t.row(r).iter().all(|v| v.is_finite()));
        let pred_ok = pred
            .as_ref()
            .is_none_or(|p| p.row(r).iter().all(|v| v.is_finite()));
        if !(input_ok && target_ok && pred_ok) {
            bad.push((r, train.inputs[(r, 0)], train.inputs[(r, 1)]));
        }
        if bad.len() == 10 {
            break;
        }
    }
    TrainError::NonFinite(format!(
        "epoch {epoch}: {msg} (lambda_dt = {}, lambda_f = {}, {} parameters); offending rows (index, t, P): {bad:?}",
        objective.lambda_dt,
        objective.lambda_f,
        objective.n_params()
    ))
}

fn non_finite_dump(epoch: usize, loss: &f64, pred: &ndarray::Array2<f64>) -> TrainError {
    let bad: Vec<usize> = pred
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|v| !v.is_finite()))
        .map(|(i, _)| i)
        .take(10)
        .collect();
    TrainError::NonFinite(format!(
        "epoch {epoch}: training loss {loss}, non-finite validation rows {bad:?}"
    ))
}
