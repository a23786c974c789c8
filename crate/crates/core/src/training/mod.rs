//! Losses, scalings, the physics-loss fade-in, L-BFGS and the epoch loop.

mod lbfgs;
mod losses;
mod objective;
mod scalings;
mod trainer;

pub use lbfgs::{lbfgs_minimize, IterationTrace, LbfgsConfig, LbfgsState, LbfgsTrace};
pub use losses::{
    lambda_f_schedule, loss_dt, loss_f, loss_f_of, loss_x, physics_residual, pointwise_loss,
    scaled_mse, LossWeights,
};
pub use objective::{Evaluation, Objective};
pub use scalings::{column_std, compute_scalings, Scalings, SCALING_FLOOR};
pub use trainer::{
    initial_model, train, EpochRecord, Flavour, Hyperparameters, TrainOutcome, TrainRecord,
    TrainSetup,
};

use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("io: {0}")]
    Io(String),
}
