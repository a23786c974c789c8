//! Plain-text case files.
//!
//! A case file has three sections. Blank lines and anything after `#` are
//! ignored.
//!
//! ```text
//! [BUS]
//! # index kind Vm P_set [gs bs]
//! 1 G 1.03 7.0
//! 7 L 0.961 -9.67
//!
//! [BRANCH]
//! # from to r x b_shunt
//! 1 5 0.0 0.0166667 0.0
//!
//! [PARAM]
//! name kundur11
//! omega0 376.99111843077515
//! base_mva 100
//! h 6.5 6.5 6.175 6.175
//! gen_damping 0.05
//! load_damping 1.0
//! disturbance_bus 7
//! ```
//!
//! Bus indices are 1-based and must be contiguous. `kind` is `G` for a
//! generator bus and `L` for a load bus. `h` lists one inertia constant per
//! generator in ascending bus order. `gen_damping` and `load_damping` are the
//! coefficients `c` of `D_i = c * omega0 / |P_set,i|` and
//! `d_i = c * |P_set,i| / omega0`. `name` and `disturbance_bus` are optional.

use std::str::FromStr;

use super::{BusKind, GridError};

#[derive(Debug, Clone, PartialEq)]
pub struct BusRecord {
    pub index: usize,
    pub kind: BusKind,
    pub vm: f64,
    pub p_set: f64,
    pub gs: f64,
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchRecord {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_shunt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseData {
    pub name: String,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub omega0: f64,
    pub base_mva: f64,
    pub inertia: Vec<f64>,
    pub gen_damping: f64,
    pub load_damping: f64,
    pub disturbance_bus: Option<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Branch,
    Param,
}

fn parse_num<T: FromStr>(token: &str, line: usize, what: &str) -> Result<T, GridError> {
    token.parse().map_err(|_| GridError::Parse {
        line,
        message: format!("invalid {what} `{token}`"),
    })
}

impl FromStr for CaseData {
    type Err = GridError;

    fn from_str(text: &str) -> Result<Self, GridError> {
        let mut section = Section::None;
        let mut buses = Vec::new();
        let mut branches = Vec::new();
        let mut name = String::from("unnamed");
        let mut omega0 = None;
        let mut base_mva = None;
        let mut inertia = None;
        let mut gen_damping = None;
        let mut load_damping = None;
        let mut disturbance_bus = None;

        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[BUS]" => Section::Bus,
                    "[BRANCH]" => Section::Branch,
                    "[PARAM]" => Section::Param,
                    other => {
                        return Err(GridError::Parse {
                            line: line_no,
                            message: format!("unknown section {other}"),
                        })
                    }
                };
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match section {
                Section::None => {
                    return Err(GridError::Parse {
                        line: line_no,
                        message: "data outside of a section".into(),
                    })
                }
                Section::Bus => {
                    if tokens.len() != 4 && tokens.len() != 6 {
                        return Err(GridError::Parse {
                            line: line_no,
                            message: "BUS rows need 4 or 6 columns".into(),
                        });
                    }
                    let kind = match tokens[1] {
                        "G" | "g" => BusKind::Generator,
                        "L" | "l" => BusKind::Load,
                        other => {
                            return Err(GridError::Parse {
                                line: line_no,
                                message: format!("unknown bus kind `{other}`"),
                            })
                        }
                    };
                    let (gs, bs) = if tokens.len() == 6 {
                        (
                            parse_num(tokens[4], line_no, "gs")?,
                            parse_num(tokens[5], line_no, "bs")?,
                        )
                    } else {
                        (0.0, 0.0)
                    };
                    buses.push(BusRecord {
                        index: parse_num(tokens[0], line_no, "bus index")?,
                        kind,
                        vm: parse_num(tokens[2], line_no, "Vm")?,
                        p_set: parse_num(tokens[3], line_no, "P_set")?,
                        gs,
                        bs,
                    });
                }
                Section::Branch => {
                    if tokens.len() != 5 {
                        return Err(GridError::Parse {
                            line: line_no,
                            message: "BRANCH rows need 5 columns".into(),
                        });
                    }
                    branches.push(BranchRecord {
                        from: parse_num(tokens[0], line_no, "from bus")?,
                        to: parse_num(tokens[1], line_no, "to bus")?,
                        r: parse_num(tokens[2], line_no, "r")?,
                        x: parse_num(tokens[3], line_no, "x")?,
                        b_shunt: parse_num(tokens[4], line_no, "b_shunt")?,
                    });
                }
                Section::Param => {
                    let key = tokens[0];
                    let values = &tokens[1..];
                    let single = |what: &str| -> Result<f64, GridError> {
                        match values {
                            [v] => parse_num(v, line_no, what),
                            _ => Err(GridError::Parse {
                                line: line_no,
                                message: format!("{what} takes exactly one value"),
                            }),
                        }
                    };
                    match key {
                        "name" => name = values.join(" "),
                        "omega0" => omega0 = Some(single("omega0")?),
                        "base_mva" => base_mva = Some(single("base_mva")?),
                        "gen_damping" => gen_damping = Some(single("gen_damping")?),
                        "load_damping" => load_damping = Some(single("load_damping")?),
                        "disturbance_bus" => {
                            disturbance_bus = Some(single("disturbance_bus")? as usize)
                        }
                        "h" => {
                            inertia = Some(
                                values
                                    .iter()
                                    .map(|v| parse_num(v, line_no, "inertia"))
                                    .collect::<Result<Vec<f64>, _>>()?,
                            )
                        }
                        other => {
                            return Err(GridError::Parse {
                                line: line_no,
                                message: format!("unknown parameter `{other}`"),
                            })
                        }
                    }
                }
            }
        }

        let missing = |what: &str| GridError::Parse {
            line: 0,
            message: format!("missing parameter `{what}`"),
        };
        Ok(CaseData {
            name,
            buses,
            branches,
            omega0: omega0.ok_or_else(|| missing("omega0"))?,
            base_mva: base_mva.ok_or_else(|| missing("base_mva"))?,
            inertia: inertia.ok_or_else(|| missing("h"))?,
            gen_damping: gen_damping.ok_or_else(|| missing("gen_damping"))?,
            load_damping: load_damping.ok_or_else(|| missing("load_damping"))?,
            disturbance_bus,
        })
    }
}
