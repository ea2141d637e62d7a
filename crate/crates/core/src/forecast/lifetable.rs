//! Period life tables from death probabilities.

use serde::{Deserialize, Serialize};

use super::ForecastError;

/// `q = 1 − e^{−m}`.
pub fn qx_from_m(m: f64) -> f64 {
    -(-m).exp_m1()
}

/// Fraction of the interval lived by those who die in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub a0: f64,
    pub a: f64,
}

impl Default for Separation {
    fn default() -> Self {
        Self { a0: 0.1, a: 0.5 }
    }
}

impl Separation {
    pub fn uniform(a: f64) -> Self {
        Self { a0: a, a }
    }
}

/// How the last age is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    /// The last age is an open interval with rate `m`: `L = l/m`. Its `q` is
    /// ignored.
    Open { m: f64 },
    /// Every age is an ordinary one-year interval; stop once `l` drops below
    /// the tolerance.
    Truncate { tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeTable {
    pub q: Vec<f64>,
    pub l: Vec<f64>,
    pub d: Vec<f64>,
    pub person_years: Vec<f64>,
    pub e0: f64,
}

pub fn life_table(q: &[f64], sep: Separation, terminal: Terminal) -> Result<LifeTable, ForecastError> {
    if q.is_empty() {
        return Err(ForecastError::Input("empty q schedule".into()));
    }
    let closed = match terminal {
        Terminal::Open { m } => {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ForecastError::Input(format!("terminal rate {m} must be positive")));
            }
            q.len() - 1
        }
        Terminal::Truncate { .. } => q.len(),
    };
    for (i, &v) in q[..closed].iter().enumerate() {
        if !(0.0..1.0).contains(&v) {
            return Err(ForecastError::Domain { age: i, q: v });
        }
    }
    let mut l = Vec::with_capacity(q.len());
    let mut d = Vec::with_capacity(q.len());
    let mut person_years = Vec::with_capacity(q.len());
    let mut lx = 1.0;
    for (i, &qx) in q[..closed].iter().enumerate() {
        if let Terminal::Truncate { tol } = terminal {
            if lx < tol {
                break;
            }
        }
        let a = if i == 0 { sep.a0 } else { sep.a };
        let dx = lx * qx;
        l.push(lx);
        d.push(dx);
        person_years.push(lx - (1.0 - a) * dx);
        lx -= dx;
    }
    if let Terminal::Open { m } = terminal {
        l.push(lx);
        d.push(lx);
        person_years.push(lx / m);
    }
    let e0 = person_years.iter().sum();
    Ok(LifeTable {
        q: q.to_vec(),
        l,
        d,
        person_years,
        e0,
    })
}

pub fn life_expectancy(q: &[f64], sep: Separation, terminal: Terminal) -> Result<f64, ForecastError> {
    life_table(q, sep, terminal).map(|t| t.e0)
}

/// e0 from a full schedule of central rates, closing the last age as an open
/// interval at its own rate.
pub fn e0_from_rates(m: &[f64], sep: Separation) -> Result<f64, ForecastError> {
    let q: Vec<f64> = m.iter().map(|&v| qx_from_m(v)).collect();
    let last = *m.last().ok_or_else(|| ForecastError::Input("empty rate schedule".into()))?;
    life_expectancy(&q, sep, Terminal::Open { m: last })
}
