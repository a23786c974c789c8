use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Regular `(t, P)` grid. Offset grids sit half a step inside every cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_range: (f64, f64),
    pub dt: f64,
    pub p_range: (f64, f64),
    pub dp: f64,
    pub offset: bool,
}

impl GridSpec {
    pub const T_RANGE: (f64, f64) = (0.0, 20.0);
    pub const P_RANGE: (f64, f64) = (0.0, 10.0);

    /// Grid over the standard domain, 0..20 s by 0..10 pu.
    pub fn new(dt: f64, dp: f64) -> Self {
        GridSpec {
            t_range: Self::T_RANGE,
            dt,
            p_range: Self::P_RANGE,
            dp,
            offset: false,
        }
    }

    pub fn offset(mut self) -> Self {
        self.offset = true;
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (range, step) in [(self.t_range, self.dt), (self.p_range, self.dp)] {
            if !(step > 0.0 && range.1 > range.0) {
                return Err(DatasetError::Grid(format!("bad axis {range:?} step {step}")));
            }
            let cells = (range.1 - range.0) / step;
            if (cells - cells.round()).abs() > 1e-9 {
                return Err(DatasetError::Grid(format!(
                    "step {step} does not divide {range:?}"
                )));
            }
        }
        Ok(())
    }

    fn axis(&self, (lo, hi): (f64, f64), step: f64) -> Vec<f64> {
        let cells = ((hi - lo) / step).round() as usize;
        if self.offset {
            (0..cells).map(|k| lo + (k as f64 + 0.5) * step).collect()
        } else {
            (0..=cells)
                .map(|k| if k == cells { hi } else { lo + k as f64 * step })
                .collect()
        }
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.axis(self.t_range, self.dt)
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.axis(self.p_range, self.dp)
    }

    /// All points ordered by `t`, then `P`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let ps = self.p_values();
        self.t_values()
            .into_iter()
            .flat_map(|t| ps.iter().map(move |&p| (t, p)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.t_values().len() * self.p_values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Training scenarios A to E and the dense test grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    C,
    D,
    E,
    Test,
}

impl Scenario {
    pub const TRAINING: [Scenario; 5] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D, Scenario::E];

    /// `(dt, dP)` of the scenario.
    pub fn steps(self) -> (f64, f64) {
        match self {
            Scenario::A => (2.0, 2.0),
            Scenario::B => (1.0, 2.0),
            Scenario::C => (2.0, 1.0),
            Scenario::D => (1.0, 1.0),
            Scenario::E => (0.2, 0.2),
            Scenario::Test => (0.05, 0.05),
        }
    }

    pub fn grid(self) -> GridSpec {
        let (dt, dp) = self.steps();
        GridSpec::new(dt, dp)
    }

    pub fn validation_grid(self) -> GridSpec {
        self.grid().offset()
    }

    /// Physics-loss points: the scenario-E nodes.
    pub fn collocation_grid() -> GridSpec {
        Scenario::E.grid()
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::A => "A",
            Scenario::B => "B",
            Scenario::C => "C",
            Scenario::D => "D",
            Scenario::E => "E",
            Scenario::Test => "test",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Scenario::A),
            "b" => Ok(Scenario::B),
            "c" => Ok(Scenario::C),
            "d" => Ok(Scenario::D),
            "e" => Ok(Scenario::E),
            "test" => Ok(Scenario::Test),
            _ => Err(DatasetError::Grid(format!("unknown scenario '{s}'"))),
        }
    }
}
