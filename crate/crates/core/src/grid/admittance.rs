use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{BranchRecord, BusRecord};
use super::GridError;

/// Assembles the bus admittance matrix.
///
/// Off-diagonal entries are the negated series admittance of the branches
/// joining two buses; diagonal entries collect the series admittances of all
/// incident branches, half of each branch's charging susceptance, and the bus
/// shunt `gs + j*bs`.
pub fn build_admittance(
    buses: &[BusRecord],
    branches: &[BranchRecord],
) -> Result<DMatrix<Complex64>, GridError> {
    let n = buses.len();
    for (pos, bus) in buses.iter().enumerate() {
        if bus.index != pos + 1 {
            return Err(GridError::Structure(format!(
                "bus indices must be 1..={n} in order, found {} at position {}",
                bus.index,
                pos + 1
            )));
        }
    }

    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut adjacency = vec![Vec::new(); n];
    for br in branches {
        if br.from == 0 || br.to == 0 || br.from > n || br.to > n || br.from == br.to {
            return Err(GridError::Structure(format!(
                "branch {}-{} references an invalid bus",
                br.from, br.to
            )));
        }
        let z = Complex64::new(br.r, br.x);
        if z.norm() == 0.0 {
            return Err(GridError::Structure(format!(
                "branch {}-{} has zero impedance",
                br.from, br.to
            )));
        }
        let ys = z.inv();
        let half_b = Complex64::new(0.0, 0.5 * br.b_shunt);
        let (f, t) = (br.from - 1, br.to - 1);
        y[(f, f)] += ys + half_b;
        y[(t, t)] += ys + half_b;
        y[(f, t)] -= ys;
        y[(t, f)] -= ys;
        adjacency[f].push(t);
        adjacency[t].push(f);
    }
    for (i, bus) in buses.iter().enumerate() {
        y[(i, i)] += Complex64::new(bus.gs, bus.bs);
    }

    if let Some(isolated) = (0..n).find(|&i| adjacency[i].is_empty()) {
        return Err(GridError::Structure(format!(
            "bus {} has no branches",
            isolated + 1
        )));
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = n > 0;
    while let Some(i) = stack.pop() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    if let Some(unreached) = seen.iter().position(|s| !s) {
        return Err(GridError::Structure(format!(
            "network is disconnected: bus {} is not reachable from bus 1",
            unreached + 1
        )));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BusKind;

    fn bus(index: usize) -> BusRecord {
        BusRecord {
            index,
            kind: BusKind::Load,
            vm: 1.0,
            p_set: 0.0,
            gs: 0.0,
            bs: 0.0,
        }
    }

    fn line(from: usize, to: usize, r: f64, x: f64) -> BranchRecord {
        BranchRecord {
            from,
            to,
            r,
            x,
            b_shunt: 0.0,
        }
    }

    #[test]
    fn single_branch() {
        let y = build_admittance(&[bus(1), bus(2)], &[line(1, 2, 0.01, 0.1)]).unwrap();
        let ys = Complex64::new(0.01, 0.1).inv();
        assert_eq!(y[(0, 0)], ys);
        assert_eq!(y[(1, 1)], ys);
        assert_eq!(y[(0, 1)], -ys);
        assert_eq!(y[(1, 0)], -ys);
    }

    #[test]
    fn parallel_branches_add() {
        let y = build_admittance(
            &[bus(1), bus(2)],
            &[line(1, 2, 0.0, 0.1), line(1, 2, 0.0, 0.2)],
        )
        .unwrap();
        let total = Complex64::new(0.0, 0.1).inv() + Complex64::new(0.0, 0.2).inv();
        assert!((y[(0, 0)] - total).norm() < 1e-12);
        assert!((y[(0, 1)] + total).norm() < 1e-12);
    }

    #[test]
    fn isolated_bus_is_rejected() {
        let err = build_admittance(&[bus(1), bus(2), bus(3)], &[line(1, 2, 0.0, 0.1)]);
        assert!(matches!(err, Err(GridError::Structure(_))));
    }

    #[test]
    fn disconnected_islands_are_rejected() {
        let err = build_admittance(
            &[bus(1), bus(2), bus(3), bus(4)],
            &[line(1, 2, 0.0, 0.1), line(3, 4, 0.0, 0.1)],
        );
        assert!(matches!(err, Err(GridError::Structure(_))));
    }

    #[test]
    fn row_sums_equal_shunts() {
        let mut buses = vec![bus(1), bus(2), bus(3)];
        buses[2].bs = 0.3;
        let mut branches = vec![line(1, 2, 0.01, 0.1), line(2, 3, 0.02, 0.05)];
        branches[0].b_shunt = 0.2;
        let y = build_admittance(&buses, &branches).unwrap();
        let sums: Vec<Complex64> = (0..3).map(|i| y.row(i).iter().sum()).collect();
        assert!((sums[0] - Complex64::new(0.0, 0.1)).norm() < 1e-12);
        assert!((sums[1] - Complex64::new(0.0, 0.1)).norm() < 1e-12);
        assert!((sums[2] - Complex64::new(0.0, 0.3)).norm() < 1e-12);
    }
}
