//! Forecast extension of κ and the cohort coefficients, posterior-predictive
//! rate surfaces, life tables, fan summaries and hold-back coverage.

pub mod coverage;
pub mod fan;
pub mod lifetable;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::Sex;
use crate::model::{ModelComponents, MortalityModel};

pub use coverage::{holdback_coverage, interval_coverage, CoverageReport};
pub use fan::{quantile, summarize_fan, FanBands, QuantileRule, DEFAULT_LEVELS};
pub use lifetable::{life_expectancy, life_table, qx_from_m, LifeTable, Separation, Terminal};

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("cohort coefficients requested up to {requested} but the knots cover {available}")]
    CohortCoverage { requested: usize, available: usize },
    #[error("forecast horizon {requested} exceeds the {available} years pre-allocated by the model")]
    Horizon { requested: usize, available: usize },
    #[error("year {0} lies outside the fitted-plus-forecast range")]
    Year(i32),
    #[error("source models disagree: {0}")]
    Mismatch(String),
    #[error("q = {q} at age index {age} outside [0, 1)")]
    Domain { age: usize, q: f64 },
    #[error("{0}")]
    Input(String),
}

/// Extends each sex's κ path by `horizon` random-walk steps. Innovations are
/// `N(0, σ²)` per sex; with `rho` the two sexes' innovations are bivariate
/// normal with that correlation.
pub fn extend_period<R: Rng + ?Sized>(
    kappa: &[Vec<f64>],
    sigma: &[f64],
    rho: Option<f64>,
    horizon: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    assert_eq!(kappa.len(), sigma.len(), "one σ per κ path");
    let mut out: Vec<Vec<f64>> = kappa.to_vec();
    for _ in 0..horizon {
        let z: Vec<f64> = (0..kappa.len()).map(|_| StandardNormal.sample(rng)).collect();
        let eps: Vec<f64> = match (rho, kappa.len()) {
            (Some(r), 2) => vec![sigma[0] * z[0], sigma[1] * (r * z[0] + (1.0 - r * r).sqrt() * z[1])],
            _ => z.iter().zip(sigma).map(|(z, s)| s * z).collect(),
        };
        for (path, e) in out.iter_mut().zip(eps) {
            let last = *path.last().expect("non-empty κ");
            path.push(last + e);
        }
    }
    out
}

/// Appends `n_new` cohort coefficients whose first differences are
/// `N(0, σ_γ²)`; existing coefficients are untouched.
pub fn extend_cohort<R: Rng + ?Sized>(
    model: &MortalityModel,
    coef: &[f64],
    n_new: usize,
    sigma_gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>, ForecastError> {
    let requested = coef.len() + n_new;
    if requested > model.n_cohort_total {
        return Err(ForecastError::CohortCoverage {
            requested,
            available: model.n_cohort_total,
        });
    }
    let mut out = coef.to_vec();
    for _ in 0..n_new {
        let e: f64 = StandardNormal.sample(rng);
        let last = *out.last().expect("non-empty coefficients");
        out.push(last + sigma_gamma * e);
    }
    Ok(out)
}

/// Components extended by `horizon` forecast years: κ of length `T + horizon`
/// and cohort coefficients over every pre-allocated knot.
pub fn extend_components<R: Rng + ?Sized>(
    model: &MortalityModel,
    comp: &ModelComponents,
    horizon: usize,
    rng: &mut R,
) -> Result<ModelComponents, ForecastError> {
    if horizon > model.spec.horizon as usize {
        return Err(ForecastError::Horizon {
            requested: horizon,
            available: model.spec.horizon as usize,
        });
    }
    let kappa: Vec<Vec<f64>> = comp.sexes.iter().map(|s| s.kappa.clone()).collect();
    let sigma: Vec<f64> = comp.sexes.iter().map(|s| s.sigma_kappa).collect();
    let kappa = extend_period(&kappa, &sigma, comp.rho, horizon, rng);
    let mut out = comp.clone();
    for (s, k) in out.sexes.iter_mut().zip(kappa) {
        s.kappa = k;
        let n_new = model.n_cohort_total - s.cohort_coef.len();
        s.cohort_coef = extend_cohort(model, &s.cohort_coef, n_new, s.sigma_gamma, rng)?;
    }
    Ok(out)
}

/// Draw `index` of source model `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct DrawRef {
    pub source: usize,
    pub index: usize,
}

/// Posterior draws of one fitted model.
#[derive(Debug, Clone, Copy)]
pub struct ModelDraws<'a> {
    pub model: &'a MortalityModel,
    pub draws: &'a [Vec<f64>],
}

/// Per-draw log rates over `sexes × ages × years`, draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSurface {
    pub sexes: Vec<Sex>,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// Provenance of each draw.
    pub source: Vec<DrawRef>,
    /// NB dispersion per draw and sex.
    pub phi: Vec<Vec<f64>>,
    pub log_m: Vec<f64>,
}

impl ForecastSurface {
    pub fn n_draws(&self) -> usize {
        self.source.len()
    }

    fn stride(&self) -> usize {
        self.sexes.len() * self.ages.len() * self.years.len()
    }

    fn offset(&self, sex: usize, age: usize, year: usize) -> usize {
        (sex * self.ages.len() + age) * self.years.len() + year
    }

    pub fn get(&self, draw: usize, sex: usize, age: usize, year: usize) -> f64 {
        self.log_m[draw * self.stride() + self.offset(sex, age, year)]
    }

    /// All draws at one cell.
    pub fn cell(&self, sex: usize, age: usize, year: usize) -> Vec<f64> {
        let (st, off) = (self.stride(), self.offset(sex, age, year));
        (0..self.n_draws()).map(|d| self.log_m[d * st + off]).collect()
    }

    /// Age schedule of one draw in one year.
    pub fn schedule(&self, draw: usize, sex: usize, year: usize) -> Vec<f64> {
        (0..self.ages.len()).map(|a| self.get(draw, sex, a, year)).collect()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    /// Replaces each `log m` by `log(d̃/E)` with `d̃ ~ NB(E·m, φ)`, the
    /// posterior predictive of an observed log rate. `exposure(sex, age,
    /// year)` gives `E`; draws are seeded from `(seed, draw)`.
    pub fn predictive<F>(&self, exposure: F, seed: u64) -> ForecastSurface
    where
        F: Fn(usize, usize, usize) -> f64 + Sync,
    {
        let st = self.stride();
        let mut log_m = vec![0.0; self.log_m.len()];
        log_m.par_chunks_mut(st).enumerate().for_each(|(d, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64 + (1 << 40));
            for s in 0..self.sexes.len() {
                let phi = self.phi[d][s];
                let gamma = Gamma::new(phi, 1.0 / phi).expect("φ > 0");
                for a in 0..self.ages.len() {
                    for y in 0..self.years.len() {
                        let off = self.offset(s, a, y);
                        let e = exposure(s, a, y);
                        let mu = e * self.log_m[d * st + off].exp();
                        let lam = mu * gamma.sample(&mut rng);
                        let n: f64 = if lam > 0.0 {
                            Poisson::new(lam).map(|p| p.sample(&mut rng)).unwrap_or(lam)
                        } else {
                            0.0
                        };
                        out[off] = (n / e).ln();
                    }
                }
            }
        });
        ForecastSurface {
            log_m,
            ..self.clone()
        }
    }
}

fn draw_rng(seed: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    rng
}

/// Evaluates every picked draw over `years`, extending κ and the cohort
/// coefficients through the full pre-allocated horizon first. Randomness is
/// keyed on `(seed, position in picks)`, so evaluating a subset of years
/// gives the same values as evaluating all of them.
pub fn predict_log_rates(
    sources: &[ModelDraws],
    picks: &[DrawRef],
    years: &[i32],
    seed: u64,
) -> Result<ForecastSurface, ForecastError> {
    let first = sources
        .first()
        .ok_or_else(|| ForecastError::Input("no source models".into()))?
        .model;
    for s in sources {
        let m = s.model;
        if m.spec.ages != first.spec.ages
            || m.spec.years != first.spec.years
            || m.spec.horizon != first.spec.horizon
            || m.sexes != first.sexes
        {
            return Err(ForecastError::Mismatch(format!(
                "model at x_old={} has a different grid from x_old={}",
                m.spec.x_old, first.spec.x_old
            )));
        }
    }
    let last = first.spec.years.1 + first.spec.horizon as i32;
    for &y in years {
        if y < first.spec.years.0 || y > last {
            return Err(ForecastError::Year(y));
        }
    }
    for p in picks {
        let ok = sources.get(p.source).is_some_and(|s| p.index < s.draws.len());
        if !ok {
            return Err(ForecastError::Input(format!("draw {p:?} does not exist")));
        }
    }
    let horizon = first.spec.horizon as usize;
    let ages = first.ages();
    let n_sex = first.sexes.len();
    let stride = n_sex * ages.len() * years.len();
    let per_draw: Result<Vec<(Vec<f64>, Vec<f64>)>, ForecastError> = picks
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let src = &sources[p.source];
            let comp = src.model.components(&src.draws[p.index]);
            let mut rng = draw_rng(seed, j);
            let ext = extend_components(src.model, &comp, horizon, &mut rng)?;
            let mut v = Vec::with_capacity(stride);
            for c in &ext.sexes {
                for &a in &ages {
                    for &y in years {
                        v.push(src.model.log_rate(c, ext.log_psi, a, y));
                    }
                }
            }
            Ok((v, ext.sexes.iter().map(|c| c.phi).collect()))
        })
        .collect();
    let per_draw = per_draw?;
    let mut log_m = Vec::with_capacity(stride * picks.len());
    let mut phi = Vec::with_capacity(picks.len());
    for (v, p) in per_draw {
        log_m.extend(v);
        phi.push(p);
    }
    Ok(ForecastSurface {
        sexes: first.sexes.clone(),
        ages,
        years: years.to_vec(),
        source: picks.to_vec(),
        phi,
        log_m,
    })
}

/// Every draw of a single model, in order.
pub fn all_draws(source: usize, n: usize) -> Vec<DrawRef> {
    (0..n).map(|index| DrawRef { source, index }).collect()
}

/// Period life expectancy at birth for each draw in one year.
pub fn e0_draws(surface: &ForecastSurface, sex: usize, year: usize) -> Result<Vec<f64>, ForecastError> {
    (0..surface.n_draws())
        .map(|d| {
            let m: Vec<f64> = surface.schedule(d, sex, year).iter().map(|v| v.exp()).collect();
            lifetable::e0_from_rates(&m, Separation::default())
        })
        .collect()
}

#[cfg(test)]
mod tests;
