use nalgebra::{DMatrix, DVector};

use super::{Disturbance, GridError, NetworkModel, StateVector};

/// Newton settings for the operating-point solvers.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Damped Newton on a square system. `eval` fills the residual and Jacobian.
fn newton<F>(
    mut z: DVector<f64>,
    opts: &EquilibriumOptions,
    mut eval: F,
) -> Result<DVector<f64>, GridError>
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>, Option<&mut DMatrix<f64>>),
{
    let n = z.len();
    let mut r = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, n);
    eval(&z, &mut r, Some(&mut jac));
    let mut norm = r.amax();
    for _ in 0..opts.max_iter {
        if norm <= 0.01 * opts.tol {
            return Ok(z);
        }
        let step = match jac.clone().lu().solve(&r) {
            Some(s) => s,
            None => {
                return Err(GridError::NonConvergence {
                    iterations: 0,
                    residual: norm,
                })
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &z - alpha * &step;
            eval(&trial, &mut r, None);
            let trial_norm = r.amax();
            if trial_norm.is_finite() && trial_norm < norm {
                z = trial;
                norm = trial_norm;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        eval(&z, &mut r, Some(&mut jac));
    }
    if norm <= opts.tol {
        Ok(z)
    } else {
        Err(GridError::NonConvergence {
            iterations: opts.max_iter,
            residual: norm,
        })
    }
}

/// Operating point with every frequency deviation at zero and the reference
/// angle at zero.
///
/// Solves the power balance of every non-reference bus for the angles and then
/// checks the full right-hand side. A disturbance that leaves the injections
/// unbalanced has no such point and is reported as an error.
pub fn find_equilibrium(
    network: &NetworkModel,
    dist: &Disturbance,
    opts: &EquilibriumOptions,
) -> Result<StateVector, GridError> {
    network.check_disturbance(dist)?;
    let layout = network.layout.clone();
    let n = layout.n_bus;
    let nr = n - 1;
    let rows: Vec<usize> = (0..n)
        .filter(|&i| i != layout.reference)
        .map(|i| balance_row(network, i))
        .collect();
    let cols: Vec<usize> = (0..n).filter(|&i| i != layout.reference).collect();

    let mut ws = network.workspace();
    let mut x = vec![0.0; layout.len()];
    let mut f = vec![0.0; layout.len()];
    let mut full_jac = DMatrix::zeros(layout.len(), layout.len());
    let z = newton(DVector::zeros(nr), opts, |z, r, jac| {
        for (k, &c) in cols.iter().enumerate() {
            x[c] = z[k];
        }
        network.rhs_into(&x, dist, &mut f, &mut ws);
        for (k, &row) in rows.iter().enumerate() {
            r[k] = f[row];
        }
        if let Some(jac) = jac {
            network.jacobian_into(&x, &mut full_jac, &mut ws);
            for (a, &row) in rows.iter().enumerate() {
                for (b, &c) in cols.iter().enumerate() {
                    jac[(a, b)] = full_jac[(row, c)];
                }
            }
        }
    })?;

    let mut x = vec![0.0; layout.len()];
    for (k, &c) in cols.iter().enumerate() {
        x[c] = z[k];
    }
    let f = network.rhs(&x, dist)?;
    let residual = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if residual > opts.tol {
        return Err(GridError::Unbalanced { residual });
    }
    StateVector::unpack(&layout, &x)
}

/// Row of `f` that carries the power balance of bus `i`.
fn balance_row(network: &NetworkModel, i: usize) -> usize {
    match network.gen_of_bus[i] {
        Some(g) => network.n_bus() + g,
        None => i,
    }
}

/// Synchronous steady state under a sustained disturbance.
///
/// All generators share a common frequency deviation `w` and every angle
/// drifts at rate `w`, so the state is a fixed point of the relative-angle
/// system. Unknowns are the non-reference angles and `w`. For a balanced,
/// undisturbed case this coincides with [`find_equilibrium`].
pub fn find_steady_state(
    network: &NetworkModel,
    dist: &Disturbance,
    opts: &EquilibriumOptions,
) -> Result<StateVector, GridError> {
    network.check_disturbance(dist)?;
    let layout = network.layout.clone();
    let n = layout.n_bus;
    let cols: Vec<usize> = (0..n).filter(|&i| i != layout.reference).collect();
    // Damping seen by a rigid rotation at each bus.
    let rot_damping: Vec<f64> = (0..n)
        .map(|i| match network.gen_of_bus[i] {
            Some(g) => network.gen_damping[g],
            None => network.mass.diag[i],
        })
        .collect();
    let p_mech = network.p_mech(dist);
    let mut ws = network.workspace();
    let mut delta = vec![0.0; n];
    let mut full_jac = DMatrix::zeros(layout.len(), layout.len());
    let x_dummy = vec![0.0; layout.len()];
    let z = newton(DVector::zeros(n), opts, |z, r, jac| {
        for (k, &c) in cols.iter().enumerate() {
            delta[c] = z[k];
        }
        let w = z[n - 1];
        network.power_into(&delta, &mut ws);
        for i in 0..n {
            r[i] = p_mech[i] - ws.p[i] - rot_damping[i] * w;
        }
        if let Some(jac) = jac {
            let mut x = x_dummy.clone();
            x[..n].copy_from_slice(&delta);
            network.jacobian_into(&x, &mut full_jac, &mut ws);
            for i in 0..n {
                let row = balance_row(network, i);
                for (b, &c) in cols.iter().enumerate() {
                    jac[(i, b)] = full_jac[(row, c)];
                }
                jac[(i, n - 1)] = -rot_damping[i];
            }
        }
    })?;
    let mut x = vec![0.0; layout.len()];
    for (k, &c) in cols.iter().enumerate() {
        x[c] = z[k];
    }
    for v in &mut x[n..] {
        *v = z[n - 1];
    }
    StateVector::unpack(&layout, &x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn bundled_cases_have_equilibria() {
        for net in [NetworkModel::kundur11(), NetworkModel::ieee39()] {
            let dist = net.disturbance(0.0).unwrap();
            let eq = find_equilibrium(&net, &dist, &Default::default()).unwrap();
            let x = eq.pack();
            assert_eq!(x[net.reference()], 0.0);
            assert!(eq.domega.iter().all(|w| *w == 0.0));
            let f = net.rhs(&x, &dist).unwrap();
            assert!(max_abs(&f) <= 1e-10, "{} residual {}", net.name, max_abs(&f));
            // electrical power matches the set-points
            let pe = net.electrical_power(&eq.delta).unwrap();
            for (p, s) in pe.iter().zip(&net.p_set) {
                assert!((p - s).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn kundur_angles_are_plausible() {
        let net = NetworkModel::kundur11();
        let eq = find_equilibrium(&net, &net.disturbance(0.0).unwrap(), &Default::default())
            .unwrap();
        // generator 3 lags generator 1 by roughly 27 degrees
        let d3 = eq.delta[2].to_degrees();
        assert!((d3 + 27.05).abs() < 0.1, "{d3}");
    }

    #[test]
    fn unbalanced_disturbance_has_no_equilibrium() {
        let net = NetworkModel::kundur11();
        let err = find_equilibrium(&net, &net.disturbance(1.0).unwrap(), &Default::default());
        assert!(
            matches!(err, Err(GridError::Unbalanced { .. }) | Err(GridError::NonConvergence { .. })),
            "{err:?}"
        );
    }

    #[test]
    fn infeasible_demand_fails_to_converge() {
        let net = NetworkModel::kundur11();
        let dist = net.disturbance(1e6).unwrap();
        assert!(matches!(
            find_equilibrium(&net, &dist, &Default::default()),
            Err(GridError::NonConvergence { .. })
        ));
        assert!(matches!(
            find_steady_state(&net, &dist, &Default::default()),
            Err(GridError::NonConvergence { .. })
        ));
    }

    #[test]
    fn steady_state_is_fixed_point_of_relative_system() {
        let net = NetworkModel::kundur11();
        for p in [0.0, 4.0, 10.0] {
            let dist = net.disturbance(p).unwrap();
            let ss = find_steady_state(&net, &dist, &Default::default()).unwrap();
            let y = net.layout.to_relative(&ss.pack());
            let f = net.rhs_relative(&y, &dist).unwrap();
            assert!(max_abs(&f) <= 1e-10, "P = {p}: {}", max_abs(&f));
            if p > 0.0 {
                assert!(ss.domega[0] > 0.0);
            }
        }
    }

    #[test]
    fn steady_state_without_disturbance_matches_equilibrium() {
        let net = NetworkModel::kundur11();
        let dist = net.disturbance(0.0).unwrap();
        let a = find_equilibrium(&net, &dist, &Default::default()).unwrap();
        let b = find_steady_state(&net, &dist, &Default::default()).unwrap();
        for (x, y) in a.pack().iter().zip(b.pack()) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
