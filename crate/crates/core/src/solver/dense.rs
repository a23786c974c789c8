use super::{SolverError, Trajectory};

/// States and derivatives of the cubic Hermite interpolant at `query_times`.
///
/// Queries that hit a stored node return the stored state and derivative
/// unchanged.
pub fn sample_dense(
    traj: &Trajectory,
    query_times: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), SolverError> {
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(SolverError::OutOfSpan { t: f64::NAN }),
    };
    let mut states = Vec::with_capacity(query_times.len());
    let mut derivs = Vec::with_capacity(query_times.len());
    for &t in query_times {
        if !(t >= first && t <= last) {
            return Err(SolverError::OutOfSpan { t });
        }
        // first node with time >= t
        let idx = traj.times.partition_point(|&node| node < t);
        if traj.times[idx] == t {
            states.push(traj.states[idx].clone());
            derivs.push(traj.derivs[idx].clone());
            continue;
        }
        let (t0, t1) = (traj.times[idx - 1], traj.times[idx]);
        let (x0, x1) = (&traj.states[idx - 1], &traj.states[idx]);
        let (d0, d1) = (&traj.derivs[idx - 1], &traj.derivs[idx]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let g00 = 6.0 * s2 - 6.0 * s;
        let g10 = 3.0 * s2 - 4.0 * s + 1.0;
        let g01 = -6.0 * s2 + 6.0 * s;
        let g11 = 3.0 * s2 - 2.0 * s;
        let n = x0.len();
        let mut x = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            x.push(h00 * x0[i] + h10 * h * d0[i] + h01 * x1[i] + h11 * h * d1[i]);
            d.push((g00 * x0[i] + g01 * x1[i]) / h + g10 * d0[i] + g11 * d1[i]);
        }
        states.push(x);
        derivs.push(d);
    }
    Ok((states, derivs))
}
