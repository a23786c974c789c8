use serde::{Deserialize, Serialize};

/// Linear cost of answering `n` queries: `upfront_s + runtime_s * n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Data generation plus training, zero for the solver.
    pub upfront_s: f64,
    pub runtime_s: f64,
}

impl CostModel {
    pub fn new(upfront_s: f64, runtime_s: f64) -> Self {
        CostModel { upfront_s, runtime_s }
    }

    pub fn total_cost(&self, n: u64) -> f64 {
        self.upfront_s + self.runtime_s * n as f64
    }
}

pub fn total_cost(model: &CostModel, n: u64) -> f64 {
    model.total_cost(n)
}

/// Smallest `n` with `C_nn(n) <= C_solver(n)`, or `None` when the surrogate is
/// not faster per query.
pub fn critical_n(nn: &CostModel, solver: &CostModel) -> Option<u64> {
    if !(nn.runtime_s < solver.runtime_s) {
        return None;
    }
    let holds = |n: u64| nn.total_cost(n) <= solver.total_cost(n);
    let gap = (nn.upfront_s - solver.upfront_s) / (solver.runtime_s - nn.runtime_s);
    if !gap.is_finite() || gap >= u64::MAX as f64 {
        return None;
    }
    let mut n = gap.max(0.0).ceil() as u64;
    // the closed form can be off by rounding; settle on the exact crossing
    while n > 0 && holds(n - 1) {
        n -= 1;
    }
    while !holds(n) {
        n = n.checked_add(1)?;
    }
    Some(n)
}
