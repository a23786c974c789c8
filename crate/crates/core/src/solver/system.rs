use nalgebra::DMatrix;

use crate::grid::{Disturbance, NetworkModel, PowerWorkspace};

/// A semi-explicit system `M dx/dt = f(x)` with diagonal `M`.
pub trait DaeSystem {
    fn dim(&self) -> usize;

    /// Diagonal of `M`; zero entries mark algebraic rows.
    fn mass(&self) -> &[f64];

    fn rhs(&mut self, x: &[f64], out: &mut [f64]);

    /// `df/dx`, by forward differences unless overridden.
    fn jacobian(&mut self, x: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.dim();
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        self.rhs(x, &mut f0);
        let mut xp = x.to_vec();
        for k in 0..n {
            let h = f64::EPSILON.sqrt() * x[k].abs().max(1.0);
            xp[k] = x[k] + h;
            self.rhs(&xp, &mut f1);
            for r in 0..n {
                jac[(r, k)] = (f1[r] - f0[r]) / h;
            }
            xp[k] = x[k];
        }
    }
}

/// `dx/dt` consistent with `M dx/dt = f`.
///
/// Differential rows are `f_i / M_ii`; algebraic rows solve
/// `J_aa xdot_a = -J_ad xdot_d` from differentiating `0 = f_a(x)`.
pub fn consistent_derivative(mass: &[f64], f: &[f64], jac: &DMatrix<f64>) -> Vec<f64> {
    let n = mass.len();
    let mut xdot: Vec<f64> = (0..n)
        .map(|i| if mass[i] != 0.0 { f[i] / mass[i] } else { 0.0 })
        .collect();
    let alg: Vec<usize> = (0..n).filter(|&i| mass[i] == 0.0).collect();
    if alg.is_empty() {
        return xdot;
    }
    let na = alg.len();
    let mut jaa = DMatrix::zeros(na, na);
    let mut rhs = nalgebra::DVector::zeros(na);
    for (a, &i) in alg.iter().enumerate() {
        for (b, &k) in alg.iter().enumerate() {
            jaa[(a, b)] = jac[(i, k)];
        }
        rhs[a] = -(0..n)
            .filter(|&k| mass[k] != 0.0)
            .map(|k| jac[(i, k)] * xdot[k])
            .sum::<f64>();
    }
    if let Some(sol) = jaa.lu().solve(&rhs) {
        for (a, &i) in alg.iter().enumerate() {
            xdot[i] = sol[a];
        }
    }
    xdot
}

/// The swing-equation network under a fixed disturbance, in absolute state
/// order, with the analytic Jacobian.
pub struct SwingSystem<'a> {
    network: &'a NetworkModel,
    disturbance: Disturbance,
    ws: PowerWorkspace,
}

impl<'a> SwingSystem<'a> {
    pub fn new(network: &'a NetworkModel, disturbance: Disturbance) -> Self {
        SwingSystem {
            network,
            disturbance,
            ws: network.workspace(),
        }
    }

    pub fn network(&self) -> &NetworkModel {
        self.network
    }

    pub fn disturbance(&self) -> Disturbance {
        self.disturbance
    }
}

impl DaeSystem for SwingSystem<'_> {
    fn dim(&self) -> usize {
        self.network.layout.len()
    }

    fn mass(&self) -> &[f64] {
        &self.network.mass.diag
    }

    fn rhs(&mut self, x: &[f64], out: &mut [f64]) {
        self.network.rhs_into(x, &self.disturbance, out, &mut self.ws);
    }

    fn jacobian(&mut self, x: &[f64], jac: &mut DMatrix<f64>) {
        self.network.jacobian_into(x, jac, &mut self.ws);
    }
}

/// A system given by a closure, with a finite-difference Jacobian.
pub struct FnSystem<F> {
    mass: Vec<f64>,
    f: F,
}

impl<F: FnMut(&[f64], &mut [f64])> FnSystem<F> {
    pub fn new(mass: Vec<f64>, f: F) -> Self {
        FnSystem { mass, f }
    }
}

impl<F: FnMut(&[f64], &mut [f64])> DaeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.mass.len()
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn rhs(&mut self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}
