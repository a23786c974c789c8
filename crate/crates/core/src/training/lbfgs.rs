use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// L-BFGS settings. `max_iter` iterations make up one call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub lr: f64,
    pub history_size: usize,
    pub max_iter: usize,
    /// Defaults to `1.25 * max_iter`.
    pub max_eval: Option<usize>,
    pub tolerance_grad: f64,
    pub tolerance_change: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_ls: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            lr: 1.0,
            history_size: 100,
            max_iter: 20,
            max_eval: None,
            tolerance_grad: 1e-7,
            tolerance_change: 1e-9,
            c1: 1e-4,
            c2: 0.9,
            max_ls: 25,
        }
    }
}

/// Curvature history and step state, kept across calls.
#[derive(Debug, Clone, Default)]
pub struct LbfgsState {
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
    h_diag: f64,
    d: Vec<f64>,
    t: f64,
    prev_grad: Vec<f64>,
    pub n_iter: usize,
    pub func_evals: usize,
}

impl LbfgsState {
    pub fn history_len(&self) -> usize {
        self.s.len()
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub loss_before: f64,
    pub loss_after: f64,
    pub step: f64,
    /// Directional derivatives along the search direction before and after.
    pub gtd: f64,
    pub gtd_new: f64,
    pub evals: usize,
    pub fallback: bool,
}

impl IterationTrace {
    /// Strong Wolfe conditions with the given constants.
    pub fn satisfies_wolfe(&self, c1: f64, c2: f64) -> bool {
        self.loss_after <= self.loss_before + c1 * self.step * self.gtd
            && self.gtd_new.abs() <= -c2 * self.gtd
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsTrace {
    pub iterations: Vec<IterationTrace>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub func_evals: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Minimizer of the cubic through two points with slopes, clamped to `bounds`.
fn cubic_interpolate(
    x1: f64,
    f1: f64,
    g1: f64,
    x2: f64,
    f2: f64,
    g2: f64,
    bounds: Option<(f64, f64)>,
) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_nan() {
            return 0.5 * (lo + hi);
        }
        min_pos.max(lo).min(hi)
    } else {
        0.5 * (lo + hi)
    }
}

struct LineSearchResult {
    f: f64,
    g: Vec<f64>,
    t: f64,
    gtd: f64,
    evals: usize,
    wolfe: bool,
}

#[derive(Clone)]
struct Point {
    t: f64,
    f: f64,
    g: Vec<f64>,
    gtd: f64,
}

/// Bracketing and zoom line search for the strong Wolfe conditions.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    obj: &mut F,
    x: &[f64],
    mut t: f64,
    d: &[f64],
    f: f64,
    g: &[f64],
    gtd: f64,
    cfg: &LbfgsConfig,
) -> Result<LineSearchResult, TrainError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    let d_norm = max_abs(d);
    let (mut f_new, mut g_new) = obj(&axpy(x, t, d))?;
    let mut evals = 1;
    let mut gtd_new = dot(&g_new, d);
    let mut prev = Point {
        t: 0.0,
        f,
        g: g.to_vec(),
        gtd,
    };
    let mut done = false;
    let mut ls_iter = 0;
    let mut bracket: Vec<Point>;
    loop {
        if ls_iter >= cfg.max_ls {
            bracket = vec![
                Point {
                    t: 0.0,
                    f,
                    g: g.to_vec(),
                    gtd,
                },
                Point {
                    t,
                    f: f_new,
                    g: g_new.clone(),
                    gtd: gtd_new,
                },
            ];
            break;
        }
        let cur = Point {
            t,
            f: f_new,
            g: g_new.clone(),
            gtd: gtd_new,
        };
        if !f_new.is_finite() || f_new > f + cfg.c1 * t * gtd || (ls_iter > 1 && f_new >= prev.f) {
            bracket = vec![prev, cur];
            break;
        }
        if gtd_new.abs() <= -cfg.c2 * gtd {
            bracket = vec![cur];
            done = true;
            break;
        }
        if gtd_new >= 0.0 {
            bracket = vec![prev, cur];
            break;
        }
        let min_step = t + 0.01 * (t - prev.t);
        let max_step = t * 10.0;
        let next = cubic_interpolate(prev.t, prev.f, prev.gtd, t, f_new, gtd_new, Some((min_step, max_step)));
        prev = cur;
        t = next;
        let r = obj(&axpy(x, t, d))?;
        f_new = r.0;
        g_new = r.1;
        evals += 1;
        gtd_new = dot(&g_new, d);
        ls_iter += 1;
    }

    // zoom
    let mut insuf_progress = false;
    let order = |b: &[Point]| if b[0].f <= b[b.len() - 1].f { (0, 1) } else { (1, 0) };
    let (mut low, mut high) = if bracket.len() == 2 { order(&bracket) } else { (0, 0) };
    while !done && ls_iter < cfg.max_ls && bracket.len() == 2 {
        if (bracket[1].t - bracket[0].t).abs() * d_norm < cfg.tolerance_change {
            break;
        }
        let (b0, b1) = (&bracket[0], &bracket[1]);
        let safe = |v: f64| if v.is_finite() { v } else { 0.0 };
        t = cubic_interpolate(b0.t, safe(b0.f), safe(b0.gtd), b1.t, safe(b1.f), safe(b1.gtd), None);
        let bmax = b0.t.max(b1.t);
        let bmin = b0.t.min(b1.t);
        let eps = 0.1 * (bmax - bmin);
        if (bmax - t).min(t - bmin) < eps {
            if insuf_progress || t >= bmax || t <= bmin {
                t = if (t - bmax).abs() < (t - bmin).abs() {
                    bmax - eps
                } else {
                    bmin + eps
                };
                insuf_progress = false;
            } else {
                insuf_progress = true;
            }
        } else {
            insuf_progress = false;
        }
        let (fv, gv) = obj(&axpy(x, t, d))?;
        evals += 1;
        ls_iter += 1;
        let gtdv = dot(&gv, d);
        let p = Point {
            t,
            f: fv,
            g: gv,
            gtd: gtdv,
        };
        if !fv.is_finite() || fv > f + cfg.c1 * t * gtd || fv >= bracket[low].f {
            bracket[high] = p;
            (low, high) = order(&bracket);
        } else {
            if gtdv.abs() <= -cfg.c2 * gtd {
                done = true;
            } else if gtdv * (bracket[high].t - bracket[low].t) >= 0.0 {
                bracket[high] = bracket[low].clone();
            }
            bracket[low] = p;
        }
    }
    let best = bracket.swap_remove(low);
    Ok(LineSearchResult {
        f: best.f,
        g: best.g,
        t: best.t,
        gtd: best.gtd,
        evals,
        wolfe: done,
    })
}

/// Runs up to `cfg.max_iter` L-BFGS iterations on `obj`, updating `x` and the
/// persistent `state`. `obj` returns the loss and its gradient.
///
/// The first iteration ever uses the step `min(1, 1/|g|_1) * lr`, later ones
/// start the line search at `lr`. When the line search cannot satisfy the
/// strong Wolfe conditions, a steepest-descent step at half the initial rate
/// is taken instead and the curvature history is cleared.
pub fn lbfgs_minimize<F>(
    mut obj: F,
    x: &mut Vec<f64>,
    state: &mut LbfgsState,
    cfg: &LbfgsConfig,
) -> Result<LbfgsTrace, TrainError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    let max_eval = cfg.max_eval.unwrap_or(cfg.max_iter * 5 / 4);
    let (mut f, mut g) = obj(x)?;
    let mut evals = 1;
    let mut trace = LbfgsTrace {
        iterations: Vec::new(),
        initial_loss: f,
        final_loss: f,
        func_evals: 0,
        converged: false,
    };
    if !f.is_finite() {
        return Err(TrainError::NonFinite(format!("objective is {f} at the start")));
    }
    if max_abs(&g) <= cfg.tolerance_grad {
        trace.converged = true;
        trace.func_evals = evals;
        return Ok(trace);
    }
    if state.h_diag == 0.0 {
        state.h_diag = 1.0;
    }
    for _ in 0..cfg.max_iter {
        state.n_iter += 1;
        if state.n_iter == 1 || state.d.len() != x.len() {
            state.d = g.iter().map(|v| -v).collect();
            state.h_diag = 1.0;
        } else {
            let y: Vec<f64> = g.iter().zip(&state.prev_grad).map(|(a, b)| a - b).collect();
            let s: Vec<f64> = state.d.iter().map(|v| v * state.t).collect();
            let ys = dot(&y, &s);
            if ys > 1e-10 && cfg.history_size > 0 {
                if state.s.len() == cfg.history_size {
                    state.s.pop_front();
                    state.y.pop_front();
                    state.rho.pop_front();
                }
                state.h_diag = ys / dot(&y, &y);
                state.s.push_back(s);
                state.y.push_back(y);
                state.rho.push_back(1.0 / ys);
            }
            // two-loop recursion
            let m = state.s.len();
            let mut alpha = vec![0.0; m];
            let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
            for i in (0..m).rev() {
                alpha[i] = state.rho[i] * dot(&state.s[i], &q);
                for (qv, yv) in q.iter_mut().zip(&state.y[i]) {
                    *qv -= alpha[i] * yv;
                }
            }
            for v in &mut q {
                *v *= state.h_diag;
            }
            for i in 0..m {
                let beta = state.rho[i] * dot(&state.y[i], &q);
                for (qv, sv) in q.iter_mut().zip(&state.s[i]) {
                    *qv += (alpha[i] - beta) * sv;
                }
            }
            state.d = q;
        }
        state.prev_grad = g.clone();
        let prev_f = f;
        let g1: f64 = g.iter().map(|v| v.abs()).sum();
        let first_t = (1.0 / g1).min(1.0) * cfg.lr;
        state.t = if state.n_iter == 1 { first_t } else { cfg.lr };
        let gtd = dot(&g, &state.d);
        if gtd > -cfg.tolerance_change {
            break;
        }
        let ls = strong_wolfe(&mut obj, x, state.t, &state.d, f, &g, gtd, cfg)?;
        evals += ls.evals;
        let it = if ls.wolfe {
            state.t = ls.t;
            *x = axpy(x, ls.t, &state.d);
            f = ls.f;
            g = ls.g;
            IterationTrace {
                loss_before: prev_f,
                loss_after: f,
                step: ls.t,
                gtd,
                gtd_new: ls.gtd,
                evals: ls.evals,
                fallback: false,
            }
        } else {
            let (nf, ng, step, k) = steepest_descent(&mut obj, x, f, &g, 0.5 * first_t.max(f64::MIN_POSITIVE))?;
            evals += k;
            state.s.clear();
            state.y.clear();
            state.rho.clear();
            state.d = g.iter().map(|v| -v).collect();
            state.t = step;
            f = nf;
            g = ng;
            IterationTrace {
                loss_before: prev_f,
                loss_after: f,
                step,
                gtd: -dot(&state.prev_grad, &state.prev_grad),
                gtd_new: -dot(&g, &state.prev_grad),
                evals: ls.evals + k,
                fallback: true,
            }
        };
        trace.iterations.push(it);
        if !f.is_finite() {
            return Err(TrainError::NonFinite(format!("objective is {f} after an iteration")));
        }
        if max_abs(&g) <= cfg.tolerance_grad {
            trace.converged = true;
            break;
        }
        if evals >= max_eval {
            break;
        }
        if max_abs(&state.d) * state.t.abs() <= cfg.tolerance_change
            || (f - prev_f).abs() < cfg.tolerance_change
        {
            break;
        }
    }
    state.func_evals += evals;
    trace.final_loss = f;
    trace.func_evals = evals;
    Ok(trace)
}

/// Backtracking step along `-g`; keeps `x` when no decrease is found.
fn steepest_descent<F>(
    obj: &mut F,
    x: &mut Vec<f64>,
    f: f64,
    g: &[f64],
    mut step: f64,
) -> Result<(f64, Vec<f64>, f64, usize), TrainError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), TrainError>,
{
    let mut evals = 0;
    for _ in 0..30 {
        let trial = axpy(x, -step, g);
        let (ft, gt) = obj(&trial)?;
        evals += 1;
        if ft.is_finite() && ft < f {
            *x = trial;
            return Ok((ft, gt, step, evals));
        }
        step *= 0.5;
    }
    let (f0, g0) = obj(x)?;
    Ok((f0, g0, 0.0, evals + 1))
}
