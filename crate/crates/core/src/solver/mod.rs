//! Reference integrator for `M dx/dt = f(x, u)`: implicit trapezoidal rule
//! with step-doubling error control and cubic Hermite dense output.

mod dense;
mod export;
mod system;
mod trapezoid;

pub use dense::sample_dense;
pub use export::{read_trajectory_csv, write_trajectory, TrajectoryManifest};
pub use system::{consistent_derivative, DaeSystem, FnSystem, SwingSystem};
pub use trapezoid::{integrate, integrate_fixed, step_trapezoidal, SolverConfig, SolverStats, Trajectory};

use crate::grid::{Disturbance, GridError, NetworkModel};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("step rejected: newton iteration failed")]
    StepRejected,
    #[error("integration failed at t = {t} (h = {h:e}): {reason}")]
    IntegrationFailed {
        t: f64,
        h: f64,
        reason: String,
        partial: Box<Trajectory>,
    },
    #[error("query time {t} outside the trajectory span")]
    OutOfSpan { t: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("io: {0}")]
    Io(String),
}

/// Response of `network` to `disturbance` applied at `t = 0`, starting from
/// the undisturbed equilibrium.
pub fn simulate(
    network: &NetworkModel,
    disturbance: Disturbance,
    t_max: f64,
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    network.check_disturbance(&disturbance)?;
    let x0 = crate::grid::find_equilibrium(
        network,
        &Disturbance::none(disturbance.bus),
        &Default::default(),
    )?
    .pack();
    simulate_from(network, disturbance, &x0, t_max, config)
}

/// Like [`simulate`] with a precomputed initial state.
pub fn simulate_from(
    network: &NetworkModel,
    disturbance: Disturbance,
    x0: &[f64],
    t_max: f64,
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    let mut sys = SwingSystem::new(network, disturbance);
    integrate(&mut sys, x0, (0.0, t_max), config)
}
