//! Generator and system data: types, validation, and the system-file loader.
//!
//! A system file is UTF-8 CSV with header `bus,p_min,p_max,a,b,c`, one row
//! per unit, row order canonical. A JSON mirror (array of objects with the
//! same field names) is also accepted; the loader sniffs the format from the
//! first non-whitespace byte.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One generation unit: box limits and quadratic cost coefficients.
///
/// The unit's cost at output `p` is `a*p^2 + b*p + c` ($/h, `p` in MW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorUnit {
    pub bus: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GeneratorUnit {
    /// Marginal cost `b + 2*a*p` at output `p`.
    pub fn marginal_cost(&self, p: f64) -> f64 {
        self.b + 2.0 * self.a * p
    }

    /// Output range `p_max - p_min`.
    pub fn range(&self) -> f64 {
        self.p_max - self.p_min
    }

    fn validate(&self, row: usize) -> Result<()> {
        let check = |ok: bool, field: &str, message: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidSystem {
                    row,
                    field: field.to_string(),
                    message,
                })
            }
        };
        check(
            self.p_min.is_finite() && self.p_min >= 0.0,
            "p_min",
            format!("must be finite and >= 0, got {}", self.p_min),
        )?;
        check(
            self.p_max.is_finite() && self.p_min <= self.p_max,
            "p_max",
            format!("p_min {} exceeds p_max {}", self.p_min, self.p_max),
        )?;
        check(
            self.a.is_finite() && self.a >= 0.0,
            "a",
            format!("must be finite and >= 0 (convexity), got {}", self.a),
        )?;
        check(self.b.is_finite(), "b", "must be finite".to_string())?;
        check(self.c.is_finite(), "c", "must be finite".to_string())?;
        Ok(())
    }
}

/// An ordered set of generation units. Unit order is fixed and is the
/// canonical index order for all dispatch vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystem {
    units: Vec<GeneratorUnit>,
}

impl PowerSystem {
    /// Build a system from validated units. Fails on an empty list or any
    /// unit violating its invariants.
    pub fn new(units: Vec<GeneratorUnit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Config("a power system needs at least one unit".into()));
        }
        for (i, u) in units.iter().enumerate() {
            u.validate(i + 1)?;
        }
        Ok(Self { units })
    }

    pub fn units(&self) -> &[GeneratorUnit] {
        &self.units
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Minimum servable demand: sum of all `p_min` (recomputed, never cached).
    pub fn pd_min(&self) -> f64 {
        self.units.iter().map(|u| u.p_min).sum()
    }

    /// Maximum servable demand: sum of all `p_max`.
    pub fn pd_max(&self) -> f64 {
        self.units.iter().map(|u| u.p_max).sum()
    }

    /// Error unless `pd_min <= pd <= pd_max`.
    pub fn check_feasible(&self, pd: f64) -> Result<()> {
        let (lo, hi) = (self.pd_min(), self.pd_max());
        if !pd.is_finite() || pd < lo || pd > hi {
            return Err(Error::InfeasibleDemand {
                pd,
                pd_min: lo,
                pd_max: hi,
            });
        }
        Ok(())
    }

    /// Error unless `pg` has exactly one entry per unit.
    pub fn check_dimension(&self, pg: &[f64]) -> Result<()> {
        if pg.len() != self.units.len() {
            return Err(Error::DimensionMismatch {
                expected: self.units.len(),
                got: pg.len(),
            });
        }
        Ok(())
    }

    /// The IEEE 118-bus generator set bundled with this crate (19 units).
    pub fn bundled_ieee118() -> Self {
        load_system(BUNDLED_IEEE118.as_bytes()).expect("bundled dataset is valid")
    }
}

/// Bundled IEEE 118-bus generator data (19 units), also shipped as
/// `data/ieee118_gen19.csv`.
pub const BUNDLED_IEEE118: &str = include_str!("../data/ieee118_gen19.csv");

/// A generation vector paired with the demand it targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub pg: Vec<f64>,
    pub pd: f64,
}

impl Dispatch {
    /// Build a dispatch, rejecting non-finite entries or demand.
    pub fn new(pg: Vec<f64>, pd: f64) -> Result<Self> {
        if !pd.is_finite() {
            return Err(Error::Config(format!("demand must be finite, got {pd}")));
        }
        if let Some(i) = pg.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "dispatch entry {i} is not finite: {}",
                pg[i]
            )));
        }
        Ok(Self { pg, pd })
    }

    /// Sum of all generation entries.
    pub fn total_generation(&self) -> f64 {
        self.pg.iter().sum()
    }
}

const EXPECTED_HEADER: [&str; 6] = ["bus", "p_min", "p_max", "a", "b", "c"];

/// Load a system file (CSV or its JSON mirror) from a byte stream.
///
/// Units come back in file order. Malformed records, non-numeric fields,
/// `p_min > p_max`, or negative `a` produce an [`Error::InvalidSystem`]
/// naming the row and field.
pub fn load_system<R: Read>(mut source: R) -> Result<PowerSystem> {
    let mut text = String::new();
    source.read_to_string(&mut text).map_err(|e| Error::InvalidSystem {
        row: 0,
        field: "<stream>".into(),
        message: format!("not valid UTF-8: {e}"),
    })?;
    match text.trim_start().chars().next() {
        Some('[') | Some('{') => load_json(&text),
        _ => load_csv(&text),
    }
}

fn load_json(text: &str) -> Result<PowerSystem> {
    #[derive(Deserialize)]
    struct Wrapper {
        units: Vec<GeneratorUnit>,
    }
    let units: Vec<GeneratorUnit> = match serde_json::from_str::<Vec<GeneratorUnit>>(text) {
        Ok(units) => units,
        Err(_) => {
            serde_json::from_str::<Wrapper>(text)
                .map_err(|e| Error::InvalidSystem {
                    row: 0,
                    field: "<json>".into(),
                    message: e.to_string(),
                })?
                .units
        }
    };
    PowerSystem::new(units)
}

fn load_csv(text: &str) -> Result<PowerSystem> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidSystem {
        row: 0,
        field: "<header>".into(),
        message: "empty file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    if names != EXPECTED_HEADER {
        return Err(Error::InvalidSystem {
            row: 0,
            field: "<header>".into(),
            message: format!("expected header `bus,p_min,p_max,a,b,c`, got `{header}`"),
        });
    }

    let mut units = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::InvalidSystem {
                row,
                field: "<record>".into(),
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::InvalidSystem {
                row,
                field: EXPECTED_HEADER[i].to_string(),
                message: format!("not a number: `{}`", fields[i]),
            })
        };
        let bus = fields[0].parse::<u32>().map_err(|_| Error::InvalidSystem {
            row,
            field: "bus".into(),
            message: format!("not an integer: `{}`", fields[0]),
        })?;
        let unit = GeneratorUnit {
            bus,
            p_min: num(1)?,
            p_max: num(2)?,
            a: num(3)?,
            b: num(4)?,
            c: num(5)?,
        };
        unit.validate(row)?;
        units.push(unit);
    }
    PowerSystem::new(units)
}
