use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::admittance::build_admittance;
use super::case::CaseData;
use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BusKind {
    Generator,
    Load,
}

/// A step change of injected power at one bus, applied at `t0`.
///
/// `bus` is the 1-based bus index used in case files.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Disturbance {
    pub bus: usize,
    pub magnitude: f64,
}

impl Disturbance {
    pub fn new(bus: usize, magnitude: f64) -> Self {
        Disturbance { bus, magnitude }
    }

    pub fn none(bus: usize) -> Self {
        Disturbance { bus, magnitude: 0.0 }
    }
}

/// Index bookkeeping for the flat state vector.
///
/// Absolute layout: all bus angles by ascending bus index, then the frequency
/// deviation of every generator by ascending generator index. The relative
/// layout drops the reference angle and stores `delta_i - delta_ref` for the
/// remaining buses, followed by the same frequency deviations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateLayout {
    pub n_bus: usize,
    pub n_gen: usize,
    pub reference: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.n_bus + self.n_gen
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn relative_len(&self) -> usize {
        self.n_bus - 1 + self.n_gen
    }

    /// Number of angle entries in the relative layout.
    pub fn relative_angles(&self) -> usize {
        self.n_bus - 1
    }

    /// Bus position of the `k`-th relative angle.
    pub fn relative_bus(&self, k: usize) -> usize {
        if k < self.reference {
            k
        } else {
            k + 1
        }
    }

    pub fn to_relative(&self, x: &[f64]) -> Vec<f64> {
        let d_ref = x[self.reference];
        let mut out = Vec::with_capacity(self.relative_len());
        out.extend(
            (0..self.n_bus)
                .filter(|&i| i != self.reference)
                .map(|i| x[i] - d_ref),
        );
        out.extend_from_slice(&x[self.n_bus..self.len()]);
        out
    }

    /// Absolute state with the reference angle at zero.
    pub fn from_relative(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        self.from_relative_into(y, &mut x);
        x
    }

    pub fn from_relative_into(&self, y: &[f64], x: &mut [f64]) {
        for k in 0..self.relative_angles() {
            x[self.relative_bus(k)] = y[k];
        }
        x[self.reference] = 0.0;
        x[self.n_bus..].copy_from_slice(&y[self.relative_angles()..]);
    }

    pub fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_bus).map(|i| format!("delta_{i}")).collect();
        names.extend((1..=self.n_gen).map(|g| format!("domega_{g}")));
        names
    }

    pub fn relative_names(&self) -> Vec<String> {
        let r = self.reference + 1;
        let mut names: Vec<String> = (0..self.relative_angles())
            .map(|k| format!("delta_{}_{r}", self.relative_bus(k) + 1))
            .collect();
        names.extend((1..=self.n_gen).map(|g| format!("domega_{g}")));
        names
    }
}

/// Structured view of a flat absolute state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub delta: Vec<f64>,
    pub domega: Vec<f64>,
}

impl StateVector {
    pub fn pack(&self) -> Vec<f64> {
        let mut v = self.delta.clone();
        v.extend_from_slice(&self.domega);
        v
    }

    pub fn unpack(layout: &StateLayout, flat: &[f64]) -> Result<Self, GridError> {
        if flat.len() != layout.len() {
            return Err(GridError::Dimension {
                expected: layout.len(),
                found: flat.len(),
            });
        }
        Ok(StateVector {
            delta: flat[..layout.n_bus].to_vec(),
            domega: flat[layout.n_bus..].to_vec(),
        })
    }
}

/// Diagonal mass matrix in absolute state order; zero marks an algebraic row.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    pub diag: Vec<f64>,
}

impl MassMatrix {
    pub fn is_algebraic(&self, i: usize) -> bool {
        self.diag[i] == 0.0
    }
}

/// Active power `Re(V ∘ conj(Y V))` with `V = Vm e^{j delta}`.
pub fn electrical_power(
    ybus: &DMatrix<Complex64>,
    vm: &[f64],
    delta: &[f64],
) -> Result<Vec<f64>, GridError> {
    let n = ybus.nrows();
    if ybus.ncols() != n {
        return Err(GridError::Dimension {
            expected: n,
            found: ybus.ncols(),
        });
    }
    for len in [vm.len(), delta.len()] {
        if len != n {
            return Err(GridError::Dimension {
                expected: n,
                found: len,
            });
        }
    }
    let v: Vec<Complex64> = vm
        .iter()
        .zip(delta)
        .map(|(&m, &d)| Complex64::from_polar(m, d))
        .collect();
    Ok((0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|j| ybus[(i, j)] * v[j]).sum();
            (v[i] * current.conj()).re
        })
        .collect())
}

/// Swing-equation model of a multi-machine network.
///
/// Generator buses carry `M d(delta)/dt = dw` and
/// `2 H omega0 d(dw)/dt = P_mech - D dw - P_e`; load buses carry
/// `d omega0 d(delta)/dt = P_mech - P_e`, with `P_e` the active power injected
/// from the bus into the network. Loads without demand have a zero mass entry
/// and become algebraic power-balance constraints.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub name: String,
    pub kinds: Vec<BusKind>,
    pub ybus: DMatrix<Complex64>,
    pub vm: Vec<f64>,
    pub p_set: Vec<f64>,
    /// Inertia constant per generator.
    pub inertia: Vec<f64>,
    /// Damping `D_i` per generator.
    pub gen_damping: Vec<f64>,
    /// Damping `d_i` per bus (zero on generator buses).
    pub load_damping: Vec<f64>,
    pub omega0: f64,
    pub base_mva: f64,
    pub gen_buses: Vec<usize>,
    pub gen_of_bus: Vec<Option<usize>>,
    pub layout: StateLayout,
    pub mass: MassMatrix,
    pub default_disturbance_bus: Option<usize>,
    gen_damping_coeff: f64,
    load_damping_coeff: f64,
    g: DMatrix<f64>,
    b: DMatrix<f64>,
}

pub const KUNDUR_11: &str = include_str!("../../data/kundur11.case");
pub const IEEE_39: &str = include_str!("../../data/ieee39.case");

/// Scratch buffers for power-flow evaluation.
#[derive(Debug, Clone, Default)]
pub struct PowerWorkspace {
    vr: Vec<f64>,
    vi: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    x_abs: Vec<f64>,
    f_abs: Vec<f64>,
}

impl NetworkModel {
    pub fn from_case(case: &CaseData) -> Result<Self, GridError> {
        let ybus = build_admittance(&case.buses, &case.branches)?;
        let kinds: Vec<BusKind> = case.buses.iter().map(|b| b.kind).collect();
        let gen_buses: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == BusKind::Generator)
            .map(|(i, _)| i)
            .collect();
        if gen_buses.is_empty() {
            return Err(GridError::Validation("case has no generator bus".into()));
        }
        if case.inertia.len() != gen_buses.len() {
            return Err(GridError::Validation(format!(
                "{} inertia constants for {} generators",
                case.inertia.len(),
                gen_buses.len()
            )));
        }
        if let Some(h) = case.inertia.iter().find(|h| !(**h > 0.0)) {
            return Err(GridError::Validation(format!(
                "inertia constants must be positive, found {h}"
            )));
        }
        if !(case.omega0 > 0.0) {
            return Err(GridError::Validation("omega0 must be positive".into()));
        }
        if case.load_damping < 0.0 || !(case.gen_damping > 0.0) {
            return Err(GridError::Validation(
                "damping coefficients must be positive".into(),
            ));
        }
        let n = kinds.len();
        let mut gen_of_bus = vec![None; n];
        for (g, &bus) in gen_buses.iter().enumerate() {
            gen_of_bus[bus] = Some(g);
        }
        if let Some(bus) = case.disturbance_bus {
            if bus == 0 || bus > n {
                return Err(GridError::Validation(format!(
                    "disturbance bus {bus} is not in the case"
                )));
            }
        }
        let mut model = NetworkModel {
            name: case.name.clone(),
            g: ybus.map(|y| y.re),
            b: ybus.map(|y| y.im),
            ybus,
            vm: case.buses.iter().map(|b| b.vm).collect(),
            p_set: case.buses.iter().map(|b| b.p_set).collect(),
            inertia: case.inertia.clone(),
            gen_damping: Vec::new(),
            load_damping: Vec::new(),
            omega0: case.omega0,
            base_mva: case.base_mva,
            layout: StateLayout {
                n_bus: n,
                n_gen: gen_buses.len(),
                reference: gen_buses[0],
            },
            gen_buses,
            gen_of_bus,
            kinds,
            mass: MassMatrix { diag: Vec::new() },
            default_disturbance_bus: case.disturbance_bus,
            gen_damping_coeff: case.gen_damping,
            load_damping_coeff: case.load_damping,
        };
        model.derive_coefficients()?;
        Ok(model)
    }

    fn derive_coefficients(&mut self) -> Result<(), GridError> {
        let w0 = self.omega0;
        let mut gen_damping = Vec::with_capacity(self.gen_buses.len());
        for &bus in &self.gen_buses {
            let p = self.p_set[bus];
            if p == 0.0 {
                return Err(GridError::Validation(format!(
                    "generator bus {} has a zero set-point, damping is undefined",
                    bus + 1
                )));
            }
            gen_damping.push(self.gen_damping_coeff * w0 / p.abs());
        }
        let load_damping: Vec<f64> = self
            .kinds
            .iter()
            .zip(&self.p_set)
            .map(|(k, p)| match k {
                BusKind::Generator => 0.0,
                BusKind::Load => self.load_damping_coeff * p.abs() / w0,
            })
            .collect();

        let mut diag = vec![0.0; self.layout.len()];
        for (i, kind) in self.kinds.iter().enumerate() {
            diag[i] = match kind {
                BusKind::Generator => 1.0,
                BusKind::Load => load_damping[i] * w0,
            };
        }
        for (g, h) in self.inertia.iter().enumerate() {
            diag[self.layout.n_bus + g] = 2.0 * h * w0;
        }
        self.gen_damping = gen_damping;
        self.load_damping = load_damping;
        self.mass = MassMatrix { diag };
        Ok(())
    }

    /// Rebuilds the damping and mass coefficients for another `omega0`.
    pub fn with_omega0(mut self, omega0: f64) -> Result<Self, GridError> {
        if !(omega0 > 0.0) {
            return Err(GridError::Validation("omega0 must be positive".into()));
        }
        self.omega0 = omega0;
        self.derive_coefficients()?;
        Ok(self)
    }

    pub fn from_case_text(text: &str) -> Result<Self, GridError> {
        Self::from_case(&text.parse()?)
    }

    /// Loads `kundur11` or `ieee39` from the bundled data, otherwise reads a
    /// case file from disk.
    pub fn load(name_or_path: &str) -> Result<Self, GridError> {
        match name_or_path {
            "kundur11" => Self::from_case_text(KUNDUR_11),
            "ieee39" => Self::from_case_text(IEEE_39),
            path => {
                let text = std::fs::read_to_string(Path::new(path))
                    .map_err(|e| GridError::Io(format!("{path}: {e}")))?;
                Self::from_case_text(&text)
            }
        }
    }

    pub fn kundur11() -> Self {
        Self::from_case_text(KUNDUR_11).expect("bundled kundur11 case is valid")
    }

    pub fn ieee39() -> Self {
        Self::from_case_text(IEEE_39).expect("bundled ieee39 case is valid")
    }

    pub fn n_bus(&self) -> usize {
        self.layout.n_bus
    }

    pub fn n_gen(&self) -> usize {
        self.layout.n_gen
    }

    pub fn reference(&self) -> usize {
        self.layout.reference
    }

    pub fn disturbance(&self, magnitude: f64) -> Result<Disturbance, GridError> {
        let bus = self.default_disturbance_bus.ok_or_else(|| {
            GridError::Validation(format!("case {} names no disturbance bus", self.name))
        })?;
        Ok(Disturbance::new(bus, magnitude))
    }

    pub fn check_disturbance(&self, dist: &Disturbance) -> Result<(), GridError> {
        if dist.bus == 0 || dist.bus > self.n_bus() {
            return Err(GridError::Validation(format!(
                "disturbance bus {} is not in the case",
                dist.bus
            )));
        }
        if !dist.magnitude.is_finite() {
            return Err(GridError::Validation("disturbance must be finite".into()));
        }
        Ok(())
    }

    pub fn has_conductance(&self) -> bool {
        self.g.iter().any(|g| *g != 0.0)
    }

    pub fn workspace(&self) -> PowerWorkspace {
        let n = self.n_bus();
        PowerWorkspace {
            vr: vec![0.0; n],
            vi: vec![0.0; n],
            p: vec![0.0; n],
            q: vec![0.0; n],
            x_abs: vec![0.0; self.layout.len()],
            f_abs: vec![0.0; self.layout.len()],
        }
    }

    /// Fills `ws.p` and `ws.q` with the injections for the given angles.
    pub fn power_into(&self, delta: &[f64], ws: &mut PowerWorkspace) {
        let n = self.n_bus();
        for i in 0..n {
            let (s, c) = delta[i].sin_cos();
            ws.vr[i] = self.vm[i] * c;
            ws.vi[i] = self.vm[i] * s;
        }
        for i in 0..n {
            let mut i_re = 0.0;
            let mut i_im = 0.0;
            for j in 0..n {
                let g = self.g[(i, j)];
                let b = self.b[(i, j)];
                i_re += g * ws.vr[j] - b * ws.vi[j];
                i_im += g * ws.vi[j] + b * ws.vr[j];
            }
            ws.p[i] = ws.vr[i] * i_re + ws.vi[i] * i_im;
            ws.q[i] = ws.vi[i] * i_re - ws.vr[i] * i_im;
        }
    }

    pub fn electrical_power(&self, delta: &[f64]) -> Result<Vec<f64>, GridError> {
        electrical_power(&self.ybus, &self.vm, delta)
    }

    /// `P_set + P_dist` per bus.
    pub fn p_mech(&self, dist: &Disturbance) -> Vec<f64> {
        let mut p = self.p_set.clone();
        p[dist.bus - 1] += dist.magnitude;
        p
    }

    /// Right-hand side `f(x, u)` in absolute state order.
    pub fn rhs(&self, x: &[f64], dist: &Disturbance) -> Result<Vec<f64>, GridError> {
        if x.len() != self.layout.len() {
            return Err(GridError::Dimension {
                expected: self.layout.len(),
                found: x.len(),
            });
        }
        self.check_disturbance(dist)?;
        let mut out = vec![0.0; x.len()];
        let mut ws = self.workspace();
        self.rhs_into(x, dist, &mut out, &mut ws);
        Ok(out)
    }

    pub fn rhs_into(&self, x: &[f64], dist: &Disturbance, out: &mut [f64], ws: &mut PowerWorkspace) {
        let n = self.n_bus();
        self.power_into(&x[..n], ws);
        let dist_pos = dist.bus - 1;
        for i in 0..n {
            let p_mech = self.p_set[i] + if i == dist_pos { dist.magnitude } else { 0.0 };
            let balance = p_mech - ws.p[i];
            match self.gen_of_bus[i] {
                Some(g) => {
                    let dw = x[n + g];
                    out[i] = dw;
                    out[n + g] = balance - self.gen_damping[g] * dw;
                }
                None => out[i] = balance,
            }
        }
    }

    /// Jacobian `df/dx` in absolute state order. Independent of the disturbance.
    pub fn jacobian_into(&self, x: &[f64], jac: &mut DMatrix<f64>, ws: &mut PowerWorkspace) {
        let n = self.n_bus();
        jac.fill(0.0);
        self.power_into(&x[..n], ws);
        for i in 0..n {
            // Row of the power balance for bus i.
            let row = match self.gen_of_bus[i] {
                Some(g) => {
                    jac[(i, n + g)] = 1.0;
                    jac[(n + g, n + g)] = -self.gen_damping[g];
                    n + g
                }
                None => i,
            };
            for k in 0..n {
                let dp = if k == i {
                    -ws.q[i] - self.b[(i, i)] * self.vm[i] * self.vm[i]
                } else {
                    let g = self.g[(i, k)];
                    let b = self.b[(i, k)];
                    if g == 0.0 && b == 0.0 {
                        continue;
                    }
                    let vv_cos = ws.vr[i] * ws.vr[k] + ws.vi[i] * ws.vi[k];
                    let vv_sin = ws.vi[i] * ws.vr[k] - ws.vr[i] * ws.vi[k];
                    g * vv_sin - b * vv_cos
                };
                jac[(row, k)] = -dp;
            }
        }
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.layout.len(), self.layout.len());
        let mut ws = self.workspace();
        self.jacobian_into(x, &mut jac, &mut ws);
        jac
    }

    /// Mass entries in relative state order.
    pub fn relative_mass(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut m: Vec<f64> = (0..l.relative_angles())
            .map(|k| self.mass.diag[l.relative_bus(k)])
            .collect();
        m.extend_from_slice(&self.mass.diag[l.n_bus..]);
        m
    }

    /// Right-hand side of the relative-angle system.
    ///
    /// Angle rows become `f_i - M_ii dw_ref`, so a network that rotates
    /// rigidly at a common frequency is a fixed point.
    pub fn rhs_relative_into(
        &self,
        y: &[f64],
        dist: &Disturbance,
        out: &mut [f64],
        ws: &mut PowerWorkspace,
    ) {
        let l = &self.layout;
        let mut x = std::mem::take(&mut ws.x_abs);
        let mut f = std::mem::take(&mut ws.f_abs);
        l.from_relative_into(y, &mut x);
        self.rhs_into(&x, dist, &mut f, ws);
        let w_ref = x[l.n_bus];
        for k in 0..l.relative_angles() {
            let bus = l.relative_bus(k);
            out[k] = f[bus] - self.mass.diag[bus] * w_ref;
        }
        out[l.relative_angles()..].copy_from_slice(&f[l.n_bus..]);
        ws.x_abs = x;
        ws.f_abs = f;
    }

    pub fn rhs_relative(&self, y: &[f64], dist: &Disturbance) -> Result<Vec<f64>, GridError> {
        if y.len() != self.layout.relative_len() {
            return Err(GridError::Dimension {
                expected: self.layout.relative_len(),
                found: y.len(),
            });
        }
        self.check_disturbance(dist)?;
        let mut out = vec![0.0; y.len()];
        let mut ws = self.workspace();
        self.rhs_relative_into(y, dist, &mut out, &mut ws);
        Ok(out)
    }

    /// Jacobian of [`Self::rhs_relative_into`] with respect to the relative state.
    pub fn jacobian_relative_into(
        &self,
        y: &[f64],
        jac: &mut DMatrix<f64>,
        abs_jac: &mut DMatrix<f64>,
        ws: &mut PowerWorkspace,
    ) {
        let l = &self.layout;
        let mut x = std::mem::take(&mut ws.x_abs);
        l.from_relative_into(y, &mut x);
        self.jacobian_into(&x, abs_jac, ws);
        ws.x_abs = x;
        let na = l.relative_angles();
        let nr = l.relative_len();
        let row_of = |r: usize| if r < na { l.relative_bus(r) } else { l.n_bus + r - na };
        for r in 0..nr {
            let ar = row_of(r);
            for c in 0..nr {
                jac[(r, c)] = abs_jac[(ar, row_of(c))];
            }
            if r < na {
                // d/d(dw_ref) of -M_ii dw_ref
                jac[(r, na)] -= self.mass.diag[ar];
            }
        }
    }

    /// Time derivative of the state implied by `M dx/dt = f(x, u)`.
    ///
    /// Differential rows are `f_i / M_ii`. Algebraic rows follow from
    /// differentiating `0 = f_a(x)` along the trajectory.
    pub fn state_derivative(&self, x: &[f64], dist: &Disturbance) -> Vec<f64> {
        let mut ws = self.workspace();
        let mut f = vec![0.0; x.len()];
        self.rhs_into(x, dist, &mut f, &mut ws);
        let mut jac = DMatrix::zeros(x.len(), x.len());
        self.jacobian_into(x, &mut jac, &mut ws);
        crate::solver::consistent_derivative(&self.mass.diag, &f, &jac)
    }
}
