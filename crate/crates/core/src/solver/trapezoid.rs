use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::{consistent_derivative, DaeSystem};
use super::SolverError;

/// Settings of the implicit trapezoidal integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Newton residual bound, in state units.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub safety: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    pub max_steps: usize,
    /// Per-state multipliers of `abs_tol` in the error norm.
    pub error_weights: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::with_tolerance(1e-6)
    }
}

impl SolverConfig {
    /// Relative and absolute tolerance both set to `eps`.
    pub fn with_tolerance(eps: f64) -> Self {
        SolverConfig {
            rel_tol: eps,
            abs_tol: eps,
            h_init: 1e-4,
            h_min: 1e-12,
            h_max: 0.1,
            newton_tol: (1e-3 * eps).max(1e-13),
            newton_max_iter: 10,
            safety: 0.9,
            min_factor: 0.2,
            max_factor: 5.0,
            max_steps: 50_000_000,
            error_weights: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return bad("step sizes must satisfy 0 < h_min <= h_init <= h_max");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.newton_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1");
        }
        if !(self.safety > 0.0 && self.min_factor > 0.0 && self.min_factor < 1.0)
            || self.max_factor <= 1.0
        {
            return bad("step controller factors out of range");
        }
        Ok(())
    }
}

/// Counters of one integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub newton_iterations: usize,
    pub rhs_evaluations: usize,
}

/// Accepted steps of an integration with the state derivative at each node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial node")
    }

    fn push(&mut self, t: f64, x: Vec<f64>, xdot: Vec<f64>) {
        self.times.push(t);
        self.states.push(x);
        self.derivs.push(xdot);
    }
}

/// Buffers reused by the Newton iteration.
struct Workspace {
    jac: DMatrix<f64>,
    newton: DMatrix<f64>,
    f: Vec<f64>,
    residual: DVector<f64>,
    scale: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            jac: DMatrix::zeros(n, n),
            newton: DMatrix::zeros(n, n),
            f: vec![0.0; n],
            residual: DVector::zeros(n),
            scale: vec![1.0; n],
        }
    }
}

/// Solution of one implicit trapezoidal step.
struct StepResult {
    x: Vec<f64>,
    f: Vec<f64>,
}

/// Solves `M (x - x_n) / h = (f(x) + f_n) / 2` on differential rows and
/// `0 = f(x)` on algebraic rows by Newton's method.
///
/// Differential residuals are divided by `M_ii` and algebraic ones by
/// `|df_i/dx_i|`, so `newton_tol` is measured in state units.
fn solve_step<S: DaeSystem>(
    sys: &mut S,
    x_n: &[f64],
    f_n: &[f64],
    xdot_n: &[f64],
    h: f64,
    tol: f64,
    config: &SolverConfig,
    ws: &mut Workspace,
    stats: &mut SolverStats,
) -> Result<StepResult, SolverError> {
    let n = sys.dim();
    let mass = sys.mass().to_vec();
    let mut x: Vec<f64> = (0..n).map(|i| x_n[i] + h * xdot_n[i]).collect();

    let mut first = true;
    for _ in 0..config.newton_max_iter {
        sys.rhs(&x, &mut ws.f);
        sys.jacobian(&x, &mut ws.jac);
        stats.rhs_evaluations += 1;
        stats.newton_iterations += 1;
        if first {
            for i in 0..n {
                ws.scale[i] = if mass[i] != 0.0 {
                    1.0 / mass[i]
                } else {
                    let d = ws.jac[(i, i)].abs();
                    if d > 0.0 {
                        1.0 / d
                    } else {
                        1.0
                    }
                };
            }
            first = false;
        }
        let mut res_norm = 0.0_f64;
        for i in 0..n {
            let r = if mass[i] != 0.0 {
                mass[i] * (x[i] - x_n[i]) - 0.5 * h * (ws.f[i] + f_n[i])
            } else {
                ws.f[i]
            };
            ws.residual[i] = r * ws.scale[i];
            res_norm = res_norm.max(ws.residual[i].abs());
        }
        if !res_norm.is_finite() {
            return Err(SolverError::StepRejected);
        }
        if res_norm <= tol {
            return Ok(StepResult {
                x,
                f: ws.f.clone(),
            });
        }
        for i in 0..n {
            for k in 0..n {
                let j = ws.jac[(i, k)];
                ws.newton[(i, k)] = ws.scale[i]
                    * if mass[i] != 0.0 {
                        (if i == k { mass[i] } else { 0.0 }) - 0.5 * h * j
                    } else {
                        j
                    };
            }
        }
        let lu = ws.newton.clone().lu();
        let dx = match lu.solve(&ws.residual) {
            Some(dx) => dx,
            None => return Err(SolverError::StepRejected),
        };
        for i in 0..n {
            x[i] -= dx[i];
        }
    }
    // One last residual check after the final update.
    sys.rhs(&x, &mut ws.f);
    stats.rhs_evaluations += 1;
    let mut res_norm = 0.0_f64;
    for i in 0..n {
        let r = if mass[i] != 0.0 {
            mass[i] * (x[i] - x_n[i]) - 0.5 * h * (ws.f[i] + f_n[i])
        } else {
            ws.f[i]
        };
        res_norm = res_norm.max((r * ws.scale[i]).abs());
    }
    if res_norm <= tol {
        Ok(StepResult {
            x,
            f: ws.f.clone(),
        })
    } else {
        Err(SolverError::StepRejected)
    }
}

/// One implicit trapezoidal step of size `h` from `x_n`.
///
/// Returns [`SolverError::StepRejected`] when Newton's method fails; the
/// caller is expected to retry with a smaller step.
pub fn step_trapezoidal<S: DaeSystem>(
    sys: &mut S,
    x_n: &[f64],
    h: f64,
    config: &SolverConfig,
) -> Result<Vec<f64>, SolverError> {
    if !(h > 0.0) {
        return Err(SolverError::InvalidConfig("step size must be positive".into()));
    }
    let n = sys.dim();
    let mut ws = Workspace::new(n);
    let mut stats = SolverStats::default();
    let mut f_n = vec![0.0; n];
    sys.rhs(x_n, &mut f_n);
    let zero = vec![0.0; n];
    solve_step(sys, x_n, &f_n, &zero, h, config.newton_tol, config, &mut ws, &mut stats).map(|s| s.x)
}

fn node_derivative<S: DaeSystem>(sys: &mut S, x: &[f64], f: &[f64], ws: &mut Workspace) -> Vec<f64> {
    let mass = sys.mass().to_vec();
    if mass.iter().all(|m| *m != 0.0) {
        return f.iter().zip(&mass).map(|(fi, m)| fi / m).collect();
    }
    sys.jacobian(x, &mut ws.jac);
    consistent_derivative(&mass, f, &ws.jac)
}

/// Integrates `M dx/dt = f(x)` from `t_span.0` to `t_span.1` with step-doubling
/// error control. The last step lands exactly on `t_span.1`.
///
/// The local error estimate is held below the tolerance per unit of
/// simulated time (steps are at most 1 s), which keeps the global error
/// close to the tolerance instead of growing with the step count.
pub fn integrate<S: DaeSystem>(
    sys: &mut S,
    x0: &[f64],
    t_span: (f64, f64),
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    config.validate()?;
    let (t0, t_end) = t_span;
    if !(t_end > t0) {
        return Err(SolverError::InvalidConfig("t_max must exceed t0".into()));
    }
    let n = sys.dim();
    if x0.len() != n {
        return Err(SolverError::InvalidConfig(format!(
            "initial state has {} entries, system has {n}",
            x0.len()
        )));
    }
    if let Some(w) = &config.error_weights {
        if w.len() != n {
            return Err(SolverError::InvalidConfig("error weight length mismatch".into()));
        }
    }
    let mut ws = Workspace::new(n);
    let mut traj = Trajectory::default();

    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    sys.rhs(&x, &mut f);
    traj.stats.rhs_evaluations += 1;
    let mut xdot = node_derivative(sys, &x, &f, &mut ws);
    traj.push(t0, x.clone(), xdot.clone());

    let mut t = t0;
    let mut h = config.h_init.min(t_end - t0);
    let end_slack = 1e-12 * t_end.abs().max(1.0);
    loop {
        if t_end - t <= end_slack {
            break;
        }
        if traj.stats.accepted_steps + traj.stats.rejected_steps >= config.max_steps {
            return Err(SolverError::IntegrationFailed {
                t,
                h,
                reason: "maximum number of steps reached".into(),
                partial: Box::new(traj),
            });
        }
        let last = t + h >= t_end - end_slack;
        let h_try = if last { t_end - t } else { h };
        // Newton error must stay well below the per-unit-time error budget
        let step_tol = config
            .newton_tol
            .min(1e-3 * config.abs_tol.min(config.rel_tol) * h_try.min(1.0))
            .max(1e-15);

        let attempt = (|| {
            let full = solve_step(sys, &x, &f, &xdot, h_try, step_tol, config, &mut ws, &mut traj.stats)?;
            let half1 =
                solve_step(sys, &x, &f, &xdot, 0.5 * h_try, step_tol, config, &mut ws, &mut traj.stats)?;
            let mid_dot = node_derivative(sys, &half1.x, &half1.f, &mut ws);
            let half2 = solve_step(
                sys,
                &half1.x,
                &half1.f,
                &mid_dot,
                0.5 * h_try,
                step_tol,
                config,
                &mut ws,
                &mut traj.stats,
            )?;
            Ok::<_, SolverError>((full, half2))
        })();

        let (full, fine) = match attempt {
            Ok(pair) => pair,
            Err(SolverError::StepRejected) => {
                traj.stats.rejected_steps += 1;
                h = 0.5 * h_try;
                if h < config.h_min {
                    return Err(SolverError::IntegrationFailed {
                        t,
                        h,
                        reason: "newton failure below minimum step".into(),
                        partial: Box::new(traj),
                    });
                }
                continue;
            }
            Err(e) => return Err(e),
        };

        let err = error_norm(&x, &fine.x, &full.x, config) / h_try.min(1.0);
        if err <= 1.0 {
            t = if last { t_end } else { t + h_try };
            x = fine.x;
            f = fine.f;
            xdot = node_derivative(sys, &x, &f, &mut ws);
            traj.stats.accepted_steps += 1;
            traj.push(t, x.clone(), xdot.clone());
        } else {
            traj.stats.rejected_steps += 1;
        }
        let factor = if err == 0.0 {
            config.max_factor
        } else {
            (config.safety * err.powf(-0.5)).clamp(config.min_factor, config.max_factor)
        };
        h = (h_try * factor).min(config.h_max);
        if h < config.h_min {
            return Err(SolverError::IntegrationFailed {
                t,
                h,
                reason: "step size underflow".into(),
                partial: Box::new(traj),
            });
        }
    }
    Ok(traj)
}

/// Weighted RMS of the step-doubling error estimate `(fine - coarse) / 3`.
fn error_norm(x_old: &[f64], fine: &[f64], coarse: &[f64], config: &SolverConfig) -> f64 {
    let n = fine.len();
    let mut acc = 0.0;
    for i in 0..n {
        let w = config.error_weights.as_ref().map_or(1.0, |w| w[i]);
        let scale = config.abs_tol * w + config.rel_tol * x_old[i].abs().max(fine[i].abs());
        let e = (fine[i] - coarse[i]) / 3.0 / scale;
        acc += e * e;
    }
    (acc / n as f64).sqrt()
}

/// Fixed-step trapezoidal integration, used for convergence studies.
pub fn integrate_fixed<S: DaeSystem>(
    sys: &mut S,
    x0: &[f64],
    t_span: (f64, f64),
    h: f64,
    config: &SolverConfig,
) -> Result<Trajectory, SolverError> {
    let (t0, t_end) = t_span;
    if !(h > 0.0 && t_end > t0) {
        return Err(SolverError::InvalidConfig("need h > 0 and t_max > t0".into()));
    }
    let n = sys.dim();
    let mut ws = Workspace::new(n);
    let mut traj = Trajectory::default();
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    sys.rhs(&x, &mut f);
    let mut xdot = node_derivative(sys, &x, &f, &mut ws);
    traj.push(t0, x.clone(), xdot.clone());
    let steps = ((t_end - t0) / h).round().max(1.0) as usize;
    for k in 1..=steps {
        let t = if k == steps { t_end } else { t0 + k as f64 * h };
        let h_k = t - traj.times[k - 1];
        let step = solve_step(sys, &x, &f, &xdot, h_k, config.newton_tol, config, &mut ws, &mut traj.stats)?;
        x = step.x;
        f = step.f;
        xdot = node_derivative(sys, &x, &f, &mut ws);
        traj.stats.accepted_steps += 1;
        traj.push(t, x.clone(), xdot.clone());
    }
    Ok(traj)
}
