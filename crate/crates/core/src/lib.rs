//! Swing-equation simulation of multi-machine power systems and neural-network
//! surrogates (vanilla, derivative-regularised and physics-informed) trained
//! to replace the time-domain solver.

pub mod grid;
pub mod solver;
pub mod nn;
pub mod datasets;
pub mod training;
pub mod eval;
