//! Power-system physics: case data, admittance assembly, the swing-equation
//! right-hand side and operating points.

mod admittance;
pub mod case;
mod equilibrium;
mod network;

pub use admittance::build_admittance;
pub use case::CaseData;
pub use equilibrium::{find_equilibrium, find_steady_state, EquilibriumOptions};
pub use network::{
    electrical_power, BusKind, Disturbance, MassMatrix, NetworkModel, PowerWorkspace,
    StateLayout, StateVector, IEEE_39, KUNDUR_11,
};

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("case file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("network structure: {0}")]
    Structure(String),
    #[error("invalid case data: {0}")]
    Validation(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("newton iteration did not converge after {iterations} iterations, residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("injections do not balance, residual {residual:e}")]
    Unbalanced { residual: f64 },
    #[error("io: {0}")]
    Io(String),
}
