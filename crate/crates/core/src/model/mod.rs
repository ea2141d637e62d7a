//! Log-posterior of the hybrid mortality model and its analytic gradient.
//!
//! Ages split into three sub-models: the infant model at age 0, the additive
//! P-spline model on `[1, x_old)` and the logistic old-age model from `x_old`
//! up. Period effects `κ` and the cohort smooth `s_γ` are constrained random
//! walks sampled through standardized free coordinates (see
//! [`crate::constraints`]).

pub mod layout;
pub mod nb;
pub mod reduced;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{cohort_transform, cumsum_matrix, period_transform, ConstraintError, ConstraintTransform};
use crate::ingest::{AxisScaling, MortalityDataset, Sex};
use crate::splines::{eval_local, place_knots, smooth_prior, PenaltyEigen, SplineBlock, SplineError, CUBIC};

pub use layout::{logistic, ParameterLayout, ParameterState, SexBlock};
pub use nb::{nb_loglik, nb_loglik_checked, poisson_loglik, LikelihoodError};

/// Standard deviation of the normal priors on regression coefficients and the
/// half-normal priors on scale parameters.
pub const PRIOR_SD: f64 = 10.0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model specification: {0}")]
    Spec(String),
    #[error("data incompatible with model: {0}")]
    Data(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SexMode {
    Single,
    Joint,
}

impl fmt::Display for SexMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SexMode::Single => "single",
            SexMode::Joint => "joint",
        })
    }
}

impl FromStr for SexMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(SexMode::Single),
            "joint" => Ok(SexMode::Joint),
            other => Err(ModelError::Spec(format!(
                "unknown sex mode '{other}', expected single or joint"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// First age handled by the old-age model.
    pub x_old: u32,
    pub ages: (u32, u32),
    /// Fitted calendar years.
    pub years: (i32, i32),
    /// Forecast years beyond the last fitted year.
    pub horizon: u32,
    pub sex_mode: SexMode,
    pub knot_spacing: f64,
    pub n_exterior: usize,
    /// One `(σ_A, σ_B)` pair for both `s_α` and `s_β`.
    pub shared_smooth_scales: bool,
    /// Sample the penalized part of `s_α` through whitened coordinates
    /// (see `PenaltyEigen`). Same posterior, different geometry: whitening
    /// suits smooths whose roughness the data pin down weakly, so that `σ_A`
    /// collapses toward zero.
    #[serde(default)]
    pub noncentred_alpha: bool,
    #[serde(default = "default_true")]
    pub noncentred_beta: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub const KNOT_SPACING: f64 = 4.0;
    pub const N_EXTERIOR: usize = 3;

    pub fn new(x_old: u32, ages: (u32, u32), years: (i32, i32), horizon: u32, sex_mode: SexMode) -> Self {
        Self {
            x_old,
            ages,
            years,
            horizon,
            sex_mode,
            knot_spacing: Self::KNOT_SPACING,
            n_exterior: Self::N_EXTERIOR,
            shared_smooth_scales: false,
            noncentred_alpha: false,
            noncentred_beta: true,
        }
    }

    pub fn for_dataset(data: &MortalityDataset, x_old: u32, horizon: u32, sex_mode: SexMode) -> Self {
        Self::new(
            x_old,
            (data.ages[0], *data.ages.last().unwrap()),
            (data.years[0], *data.years.last().unwrap()),
            horizon,
            sex_mode,
        )
    }

    pub fn n_years(&self) -> usize {
        (self.years.1 - self.years.0 + 1) as usize
    }

    /// Index of the most distant forecast year counting the first fitted
    /// year as 1.
    pub fn horizon_index(&self) -> usize {
        self.n_years() + self.horizon as usize
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (a0, a1) = self.ages;
        if a0 != 0 {
            return Err(ModelError::Spec(format!("ages must start at 0, got {a0}")));
        }
        // the GAM needs at least two ages of its own and the old-age model at
        // least one
        if self.x_old < 3 || self.x_old > a1 {
            return Err(ModelError::Spec(format!(
                "transition age {} outside [3, {a1}]",
                self.x_old
            )));
        }
        if self.years.1 - self.years.0 < 2 {
            return Err(ModelError::Spec("need at least 3 fitted years".into()));
        }
        if self.horizon < 1 {
            return Err(ModelError::Spec("horizon must be at least 1".into()));
        }
        if !(self.knot_spacing > 0.0) {
            return Err(ModelError::Spec("knot spacing must be positive".into()));
        }
        if self.n_exterior < CUBIC {
            return Err(ModelError::Spec(format!(
                "need at least {CUBIC} exterior knots for a cubic basis"
            )));
        }
        Ok(())
    }
}

/// Natural-scale old-age coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OldAgeParams {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

impl OldAgeParams {
    #[inline]
    pub fn linear_predictor(&self, x: f64, tau: f64) -> f64 {
        self.b0 + self.b1 * x + self.b2 * tau + self.b3 * x * tau
    }
}

/// `(β₁, β₂, β₃)` from raw coordinates with `β₁ > 0`, `β₂ < 0`, `β₃ > −β₁/H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OldAgeTransform {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub log_jacobian: f64,
    /// `∂β_i/∂r_j`, row `i`.
    pub jacobian: [[f64; 3]; 3],
}

pub fn transform_old_age_params(raw: [f64; 3], h: f64) -> OldAgeTransform {
    assert!(h > 0.0, "horizon index must be positive");
    let e1 = raw[0].exp();
    let e2 = raw[1].exp();
    let e3 = raw[2].exp();
    OldAgeTransform {
        b1: e1,
        b2: -e2,
        b3: -e1 / h + e3,
        log_jacobian: raw[0] + raw[1] + raw[2],
        jacobian: [[e1, 0.0, 0.0], [0.0, -e2, 0.0], [-e1 / h, 0.0, e3]],
    }
}

/// Inverse of [`transform_old_age_params`].
pub fn untransform_old_age_params(b1: f64, b2: f64, b3: f64, h: f64) -> Option<[f64; 3]> {
    let slack = b3 + b1 / h;
    (b1 > 0.0 && b2 < 0.0 && slack > 0.0).then(|| [b1.ln(), (-b2).ln(), slack.ln()])
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `s_α(x) + s_β(x)·t + s_γ(t−x) + κ_t`.
#[inline]
pub fn gam_log_rate(s_alpha: f64, s_beta: f64, t: f64, s_gamma: f64, kappa: f64) -> f64 {
    s_alpha + s_beta * t + s_gamma + kappa
}

/// Logistic old-age rate in log space: `η − softplus(η − log ψ) + s_γ + κ`.
#[inline]
pub fn old_age_log_rate(params: &OldAgeParams, log_psi: f64, x: f64, tau: f64, s_gamma: f64, kappa: f64) -> f64 {
    let eta = params.linear_predictor(x, tau);
    eta - softplus(eta - log_psi) + s_gamma + kappa
}

/// `a + b·t + s_γ(t)`; the period effect does not enter.
#[inline]
pub fn infant_log_rate(intercept: f64, slope: f64, t: f64, s_gamma: f64) -> f64 {
    intercept + slope * t + s_gamma
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubModel {
    Infant,
    Gam,
    OldAge,
}

/// Nonzero cubic basis values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBasis {
    pub start: usize,
    pub w: [f64; 4],
}

impl LocalBasis {
    fn at(knots: &[f64], x: f64) -> Result<Self, SplineError> {
        let (start, v) = eval_local(knots, CUBIC, x)?;
        Ok(Self {
            start,
            w: [v[0], v[1], v[2], v[3]],
        })
    }

    /// A point on a knot has a zero last weight, and the coefficient vector
    /// may stop just before that slot; such trailing slots are skipped.
    #[inline]
    pub fn dot(&self, coef: &[f64]) -> f64 {
        let end = (self.start + 4).min(coef.len());
        coef[self.start..end].iter().zip(&self.w).map(|(c, w)| c * w).sum()
    }

    #[inline]
    fn scatter(&self, g: f64, out: &mut [f64]) {
        let end = (self.start + 4).min(out.len());
        for (o, w) in out[self.start..end].iter_mut().zip(&self.w) {
            *o += w * g;
        }
    }
}

/// Everything needed to evaluate log-rates for one sex and one draw. Vectors
/// may be longer than the fit (forecast extensions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexComponents {
    pub sex: Sex,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub cohort_coef: Vec<f64>,
    pub kappa: Vec<f64>,
    pub old: OldAgeParams,
    pub infant: (f64, f64),
    pub phi: f64,
    pub sigma_kappa: f64,
    pub sigma_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComponents {
    pub sexes: Vec<SexComponents>,
    pub log_psi: f64,
    pub rho: Option<f64>,
}

/// Log central mortality rates over the fitted grid for one sex, age-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RateField {
    pub sex: Sex,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub log_m: Vec<f64>,
}

impl RateField {
    pub fn get(&self, age_idx: usize, year_idx: usize) -> f64 {
        self.log_m[age_idx * self.years.len() + year_idx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    kind: SubModel,
    age: u32,
    year_idx: usize,
    /// Offset into `cohort_local`, `None` for cohorts older than the first
    /// in-sample cohort.
    cohort: Option<usize>,
    x: f64,
    t: f64,
    tau: f64,
    deaths: f64,
    log_exposure: f64,
    log_fact: f64,
}

/// Identifies one included cell in pointwise outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellId {
    pub sex: Sex,
    pub age: u32,
    pub year: i32,
}

/// A model specification compiled against data, ready for repeated
/// log-posterior evaluation.
#[derive(Debug, Clone)]
pub struct MortalityModel {
    pub spec: ModelSpec,
    pub axis: AxisScaling,
    pub layout: ParameterLayout,
    pub sexes: Vec<Sex>,
    pub age_spline: SplineBlock,
    age_local: Vec<LocalBasis>,
    pub cohort_knots: Vec<f64>,
    cohort_local: Vec<LocalBasis>,
    /// First in-sample cohort; older cohorts get no cohort effect.
    pub first_cohort: i32,
    pub last_cohort: i32,
    pub n_cohort_fit: usize,
    pub n_cohort_total: usize,
    pub period: ConstraintTransform,
    pub cohort: ConstraintTransform,
    /// `κ = σ_κ·Q·z`.
    pub period_loading: DMatrix<f64>,
    /// `β^γ = σ_γ·G·z`.
    pub cohort_loading: DMatrix<f64>,
    cells: Vec<Vec<Cell>>,
    cell_ids: Vec<CellId>,
    h_index: f64,
    smooth_eigen: PenaltyEigen,
}

struct SexGrad {
    alpha_age: Vec<f64>,
    beta_age: Vec<f64>,
    s_gamma: Vec<f64>,
    kappa: Vec<f64>,
    eta: [f64; 4],
    infant: [f64; 2],
    phi: f64,
    log_psi: f64,
}

impl MortalityModel {
    /// `datasets` holds one sex in single mode or female then male in joint
    /// mode, all on the grid of `spec`.
    pub fn new(spec: ModelSpec, datasets: &[MortalityDataset]) -> Result<Self, ModelError> {
        spec.validate()?;
        let want = match spec.sex_mode {
            SexMode::Single => 1,
            SexMode::Joint => 2,
        };
        if datasets.len() != want {
            return Err(ModelError::Data(format!(
                "{} mode needs {want} dataset(s), got {}",
                spec.sex_mode,
                datasets.len()
            )));
        }
        if want == 2 && (datasets[0].sex != Sex::Female || datasets[1].sex != Sex::Male) {
            return Err(ModelError::Data("joint mode expects female then male".into()));
        }
        for d in datasets {
            let ages = (d.ages[0], *d.ages.last().unwrap());
            let years = (d.years[0], *d.years.last().unwrap());
            if ages != spec.ages || years != spec.years {
                return Err(ModelError::Data(format!(
                    "{} grid ages {ages:?} years {years:?} differs from spec ages {:?} years {:?}",
                    d.sex, spec.ages, spec.years
                )));
            }
        }
        let sexes: Vec<Sex> = datasets.iter().map(|d| d.sex).collect();
        let axis = AxisScaling::from_ranges(spec.ages.0..=spec.ages.1, spec.years.0..=spec.years.1);
        let n_years = spec.n_years();
        let h_index = spec.horizon_index() as f64 / axis.time_scale;

        let gam_ages: Vec<f64> = (1..spec.x_old).map(f64::from).collect();
        let age_spline = SplineBlock::regular(gam_ages.clone(), spec.knot_spacing, spec.n_exterior)?;
        let age_local = gam_ages
            .iter()
            .map(|&a| LocalBasis::at(&age_spline.knots, a))
            .collect::<Result<Vec<_>, _>>()?;

        let mut first_cohort = i32::MAX;
        let mut last_cohort = i32::MIN;
        for d in datasets {
            let r = d
                .included_cohort_range()
                .ok_or_else(|| ModelError::Data(format!("{} has no included cells", d.sex)))?;
            first_cohort = first_cohort.min(*r.start());
            last_cohort = last_cohort.max(*r.end());
        }
        let cohort_end = spec.years.1 + spec.horizon as i32 - spec.ages.0 as i32;
        let cohort_knots = place_knots(
            first_cohort as f64,
            cohort_end as f64,
            spec.knot_spacing,
            spec.n_exterior,
        );
        let cohort_local = (first_cohort..=cohort_end)
            .map(|c| LocalBasis::at(&cohort_knots, c as f64))
            .collect::<Result<Vec<_>, _>>()?;
        let n_cohort_total = cohort_knots.len() - CUBIC - 1;
        let n_in = (last_cohort - first_cohort + 1) as usize;
        let n_cohort_fit = cohort_local[..n_in]
            .iter()
            .map(|b| b.start + b.w.iter().rposition(|&w| w > 0.0).unwrap_or(0) + 1)
            .max()
            .unwrap();
        let in_basis = DMatrix::from_fn(n_in, n_cohort_fit, |i, j| {
            let b = &cohort_local[i];
            if j >= b.start && j < b.start + 4 {
                b.w[j - b.start]
            } else {
                0.0
            }
        });
        let cohort = cohort_transform(n_cohort_fit, &in_basis, 1.0)?;
        let cohort_loading = cumsum_matrix(n_cohort_fit) * cohort.innovation_loading();
        let period = period_transform(n_years, 1.0)?;
        let period_loading = cumsum_matrix(n_years) * period.innovation_loading();

        let layout = ParameterLayout::new(
            &sexes,
            age_spline.n_coef,
            cohort.n_free(),
            period.n_free(),
            spec.shared_smooth_scales,
            [spec.noncentred_alpha, spec.noncentred_beta],
        );
        let smooth_eigen = PenaltyEigen::new(age_spline.n_coef);

        let mut cells = Vec::new();
        let mut cell_ids = Vec::new();
        for d in datasets {
            let mut v = Vec::with_capacity(d.n_included());
            for (a, &age) in d.ages.iter().enumerate() {
                let kind = if age == 0 {
                    SubModel::Infant
                } else if age < spec.x_old {
                    SubModel::Gam
                } else {
                    SubModel::OldAge
                };
                for (ti, &year) in d.years.iter().enumerate() {
                    if !d.is_included(a, ti) {
                        continue;
                    }
                    let c = year - age as i32;
                    let deaths = d.deaths_at(a, ti);
                    v.push(Cell {
                        kind,
                        age,
                        year_idx: ti,
                        cohort: (c >= first_cohort).then(|| (c - first_cohort) as usize),
                        x: axis.age(age as f64),
                        t: axis.time(year as f64),
                        tau: (ti + 1) as f64 / axis.time_scale,
                        deaths,
                        log_exposure: d.exposure_at(a, ti).ln(),
                        log_fact: nb::log_factorial(deaths),
                    });
                    cell_ids.push(CellId { sex: d.sex, age, year });
                }
            }
            cells.push(v);
        }

        Ok(Self {
            spec,
            axis,
            layout,
            sexes,
            age_spline,
            age_local,
            cohort_knots,
            cohort_local,
            first_cohort,
            last_cohort,
            n_cohort_fit,
            n_cohort_total,
            period,
            cohort,
            period_loading,
            cohort_loading,
            cells,
            cell_ids,
            h_index,
            smooth_eigen,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn parameter_names(&self) -> &[String] {
        self.layout.names()
    }

    pub fn n_years(&self) -> usize {
        self.spec.n_years()
    }

    pub fn years(&self) -> Vec<i32> {
        (self.spec.years.0..=self.spec.years.1).collect()
    }

    pub fn ages(&self) -> Vec<u32> {
        (self.spec.ages.0..=self.spec.ages.1).collect()
    }

    /// `H` on the old-age time scale.
    pub fn horizon_index(&self) -> f64 {
        self.h_index
    }

    /// Positive time index used by the old-age model; 1/10 for the first fitted year.
    pub fn old_age_time(&self, year: i32) -> f64 {
        (year - self.spec.years.0 + 1) as f64 / self.axis.time_scale
    }

    /// Included cells in pointwise order: sex, then age, then year.
    pub fn cell_ids(&self) -> &[CellId] {
        &self.cell_ids
    }

    pub fn n_cells(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn sub_model(&self, age: u32) -> SubModel {
        if age == 0 {
            SubModel::Infant
        } else if age < self.spec.x_old {
            SubModel::Gam
        } else {
            SubModel::OldAge
        }
    }

    pub fn state<'a>(&'a self, theta: &'a [f64]) -> ParameterState<'a> {
        ParameterState::new(&self.layout, theta)
    }

    fn kappas(&self, st: &ParameterState) -> Vec<Vec<f64>> {
        let q = &self.period_loading;
        let qz: Vec<DVector<f64>> = (0..self.sexes.len())
            .map(|s| q * DVector::from_column_slice(st.z_kappa(s)))
            .collect();
        match st.rho() {
            None => vec![(&qz[0] * st.sigma_kappa(0)).as_slice().to_vec()],
            Some(rho) => {
                let sm = st.sigma_kappa(1);
                let r = (1.0 - rho * rho).sqrt();
                vec![
                    (&qz[0] * st.sigma_kappa(0)).as_slice().to_vec(),
                    (&qz[0] * (sm * rho) + &qz[1] * (sm * r)).as_slice().to_vec(),
                ]
            }
        }
    }

    fn cohort_coef(&self, st: &ParameterState, s: usize) -> Vec<f64> {
        (&self.cohort_loading * DVector::from_column_slice(st.z_gamma(s)) * st.sigma_gamma(s))
            .as_slice()
            .to_vec()
    }

    /// Spline coefficients of `s_α` (`which = 0`) or `s_β` (`which = 1`).
    pub fn smooth_coef(&self, st: &ParameterState, s: usize, which: usize) -> Vec<f64> {
        let (raw, (sa, _)) = match which {
            0 => (st.beta_alpha(s), st.sigma_alpha(s)),
            _ => (st.beta_beta(s), st.sigma_beta(s)),
        };
        if self.layout.noncentred[which.min(1)] {
            self.smooth_eigen.colour(raw, sa)
        } else {
            raw.to_vec()
        }
    }

    /// Writes spline coefficients for a smooth into `theta`, whitening them
    /// with the smoothing scales already in `theta` when non-centred.
    pub fn set_smooth_coef(&self, theta: &mut [f64], s: usize, which: usize, coef: &[f64]) {
        let b = &self.layout.blocks[s];
        let (range, ia) = match which {
            0 => (b.beta_alpha.clone(), b.log_sigma_alpha[0]),
            _ => (b.beta_beta.clone(), b.log_sigma_beta[0]),
        };
        let raw = if self.layout.noncentred[which.min(1)] {
            self.smooth_eigen.whiten(coef, theta[ia].exp())
        } else {
            coef.to_vec()
        };
        theta[range].copy_from_slice(&raw);
    }

    /// Natural-scale components of a state.
    pub fn components(&self, theta: &[f64]) -> ModelComponents {
        let st = self.state(theta);
        let kappa = self.kappas(&st);
        let sexes = (0..self.sexes.len())
            .map(|s| {
                let tr = transform_old_age_params(st.old_raw(s), self.h_index);
                SexComponents {
                    sex: self.sexes[s],
                    alpha: self.smooth_coef(&st, s, 0),
                    beta: self.smooth_coef(&st, s, 1),
                    cohort_coef: self.cohort_coef(&st, s),
                    kappa: kappa[s].clone(),
                    old: OldAgeParams {
                        b0: st.beta_old0(s),
                        b1: tr.b1,
                        b2: tr.b2,
                        b3: tr.b3,
                    },
                    infant: st.infant(s),
                    phi: st.phi(s),
                    sigma_kappa: st.sigma_kappa(s),
                    sigma_gamma: st.sigma_gamma(s),
                }
            })
            .collect();
        ModelComponents {
            sexes,
            log_psi: st.log_psi(),
            rho: st.rho(),
        }
    }

    /// Cohort effect for a birth year; zero for cohorts older than the first
    /// in-sample cohort. Panics if the coefficients do not reach the cohort.
    pub fn cohort_effect(&self, cohort_coef: &[f64], cohort: i32) -> f64 {
        if cohort < self.first_cohort {
            return 0.0;
        }
        self.cohort_local[(cohort - self.first_cohort) as usize].dot(cohort_coef)
    }

    /// Last cohort covered by the pre-allocated cohort knots.
    pub fn last_knot_cohort(&self) -> i32 {
        self.first_cohort + self.cohort_local.len() as i32 - 1
    }

    /// `s_α` and `s_β` at a GAM age.
    pub fn gam_smooths(&self, comp: &SexComponents, age: u32) -> (f64, f64) {
        let b = &self.age_local[(age - 1) as usize];
        (b.dot(&comp.alpha), b.dot(&comp.beta))
    }

    /// Log rate at any age and any year covered by `comp` (fitted years, or
    /// forecast years when `comp` carries extended κ and cohort coefficients).
    pub fn log_rate(&self, comp: &SexComponents, log_psi: f64, age: u32, year: i32) -> f64 {
        let year_idx = (year - self.spec.years.0) as usize;
        let s_gamma = self.cohort_effect(&comp.cohort_coef, year - age as i32);
        match self.sub_model(age) {
            SubModel::Infant => {
                infant_log_rate(comp.infant.0, comp.infant.1, self.axis.time(year as f64), s_gamma)
            }
            SubModel::Gam => {
                let (sa, sb) = self.gam_smooths(comp, age);
                gam_log_rate(sa, sb, self.axis.time(year as f64), s_gamma, comp.kappa[year_idx])
            }
            SubModel::OldAge => old_age_log_rate(
                &comp.old,
                log_psi,
                self.axis.age(age as f64),
                self.old_age_time(year),
                s_gamma,
                comp.kappa[year_idx],
            ),
        }
    }

    /// In-sample log rates for every cell of the grid, included or not.
    pub fn rate_field(&self, theta: &[f64], sex_idx: usize) -> RateField {
        let comp = self.components(theta);
        let c = &comp.sexes[sex_idx];
        let ages = self.ages();
        let years = self.years();
        let mut log_m = Vec::with_capacity(ages.len() * years.len());
        for &a in &ages {
            for &y in &years {
                log_m.push(self.log_rate(c, comp.log_psi, a, y));
            }
        }
        RateField {
            sex: c.sex,
            ages,
            years,
            log_m,
        }
    }

    /// Per-cell log-likelihoods in [`cell_ids`](Self::cell_ids) order.
    pub fn cell_logliks(&self, theta: &[f64]) -> Vec<f64> {
        let comp = self.components(theta);
        let mut out = Vec::with_capacity(self.n_cells());
        for (s, cells) in self.cells.iter().enumerate() {
            let c = &comp.sexes[s];
            let year0 = self.spec.years.0;
            for cell in cells {
                let lm = self.log_rate(c, comp.log_psi, cell.age, year0 + cell.year_idx as i32);
                let v = nb::nb_value_dlogmu(cell.deaths, lm + cell.log_exposure, c.phi, cell.log_fact).0;
                out.push(if v.is_finite() { v } else { f64::NEG_INFINITY });
            }
        }
        out
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None, false)
    }

    pub fn log_posterior(&self, theta: &[f64]) -> f64 {
        self.eval(theta, None, true)
    }

    /// Log posterior (up to a constant) with its gradient written to `grad`.
    pub fn log_posterior_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(theta, Some(grad), true)
    }

    /// Draws `×` included cells.
    pub fn pointwise_loglik(&self, draws: &[Vec<f64>]) -> Vec<Vec<f64>> {
        use rayon::prelude::*;
        draws.par_iter().map(|d| self.cell_logliks(d)).collect()
    }

    /// Uniform draw on `[−r, r]` in every coordinate.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R, r: f64) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-r..=r)).collect()
    }

    fn eval(&self, theta: &[f64], mut grad: Option<&mut [f64]>, with_prior: bool) -> f64 {
        assert_eq!(theta.len(), self.dim(), "state length");
        if let Some(g) = grad.as_deref_mut() {
            assert_eq!(g.len(), theta.len(), "gradient length");
            g.fill(0.0);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let want_grad = grad.is_some();
        let st = self.state(theta);
        let lay = &self.layout;
        let log_psi = st.log_psi();
        let n_t = self.n_years();
        let n_in = (self.last_cohort - self.first_cohort + 1) as usize;
        let kappa = self.kappas(&st);

        let mut total = 0.0;
        let mut grads: Vec<SexGrad> = Vec::with_capacity(self.sexes.len());
        let mut coefs = Vec::with_capacity(self.sexes.len());
        let mut old_tr = Vec::with_capacity(self.sexes.len());
        for s in 0..self.sexes.len() {
            let alpha = self.smooth_coef(&st, s, 0);
            let beta = self.smooth_coef(&st, s, 1);
            let sa: Vec<f64> = self.age_local.iter().map(|b| b.dot(&alpha)).collect();
            let sb: Vec<f64> = self.age_local.iter().map(|b| b.dot(&beta)).collect();
            let coef = self.cohort_coef(&st, s);
            let sg: Vec<f64> = self.cohort_local[..n_in].iter().map(|b| b.dot(&coef)).collect();
            let tr = transform_old_age_params(st.old_raw(s), self.h_index);
            let old = OldAgeParams {
                b0: st.beta_old0(s),
                b1: tr.b1,
                b2: tr.b2,
                b3: tr.b3,
            };
            let (ia, ib) = st.infant(s);
            let phi = st.phi(s);
            let kap = &kappa[s];
            let mut g = SexGrad {
                alpha_age: vec![0.0; sa.len()],
                beta_age: vec![0.0; sa.len()],
                s_gamma: vec![0.0; n_in],
                kappa: vec![0.0; n_t],
                eta: [0.0; 4],
                infant: [0.0; 2],
                phi: 0.0,
                log_psi: 0.0,
            };
            for cell in &self.cells[s] {
                let s_gamma = cell.cohort.map_or(0.0, |c| sg[c]);
                let mut psi_share = 0.0;
                let lm = match cell.kind {
                    SubModel::Infant => infant_log_rate(ia, ib, cell.t, s_gamma),
                    SubModel::Gam => {
                        let r = (cell.age - 1) as usize;
                        gam_log_rate(sa[r], sb[r], cell.t, s_gamma, kap[cell.year_idx])
                    }
                    SubModel::OldAge => {
                        let eta = old.linear_predictor(cell.x, cell.tau);
                        psi_share = logistic(eta - log_psi);
                        eta - softplus(eta - log_psi) + s_gamma + kap[cell.year_idx]
                    }
                };
                let log_mu = lm + cell.log_exposure;
                if !want_grad {
                    total += nb::nb_value_dlogmu(cell.deaths, log_mu, phi, cell.log_fact).0;
                    continue;
                }
                let t = nb::nb_terms(cell.deaths, log_mu, phi, cell.log_fact);
                total += t.value;
                let gl = t.d_log_mu;
                g.phi += t.d_phi;
                if let Some(c) = cell.cohort {
                    g.s_gamma[c] += gl;
                }
                match cell.kind {
                    SubModel::Infant => {
                        g.infant[0] += gl;
                        g.infant[1] += gl * cell.t;
                    }
                    SubModel::Gam => {
                        let r = (cell.age - 1) as usize;
                        g.alpha_age[r] += gl;
                        g.beta_age[r] += gl * cell.t;
                        g.kappa[cell.year_idx] += gl;
                    }
                    SubModel::OldAge => {
                        let ge = gl * (1.0 - psi_share);
                        g.log_psi += gl * psi_share;
                        g.eta[0] += ge;
                        g.eta[1] += ge * cell.x;
                        g.eta[2] += ge * cell.tau;
                        g.eta[3] += ge * cell.x * cell.tau;
                        g.kappa[cell.year_idx] += gl;
                    }
                }
            }
            grads.push(g);
            coefs.push(coef);
            old_tr.push((old, tr));
        }
        if !total.is_finite() {
            if let Some(g) = grad.as_deref_mut() {
                g.fill(0.0);
            }
            return f64::NEG_INFINITY;
        }

        if with_prior {
            total += self.prior_terms(&st, &old_tr, grad.as_deref_mut());
        }

        let Some(out) = grad else {
            return total;
        };

        // chain rule from cell-level sensitivities back to sampler coordinates
        let mut gkappa: Vec<DVector<f64>> = Vec::new();
        for (s, g) in grads.iter().enumerate() {
            let b = &lay.blocks[s];
            let mut ga = vec![0.0; self.age_spline.n_coef];
            let mut gb = vec![0.0; self.age_spline.n_coef];
            for (r, basis) in self.age_local.iter().enumerate() {
                basis.scatter(g.alpha_age[r], &mut ga);
                basis.scatter(g.beta_age[r], &mut gb);
            }
            for (which, gc, range, ia) in [
                (0, ga, b.beta_alpha.clone(), b.log_sigma_alpha[0]),
                (1, gb, b.beta_beta.clone(), b.log_sigma_beta[0]),
            ] {
                if !lay.noncentred[which] {
                    for (k, i) in range.enumerate() {
                        out[i] += gc[k];
                    }
                    continue;
                }
                // β = V·diag(1, σ_A/√λ₁, …)·(c₀, u₁, …)
                let sig_a = if which == 0 { st.sigma_alpha(s).0 } else { st.sigma_beta(s).0 };
                let scales = self.smooth_eigen.scales(sig_a);
                let proj = self.smooth_eigen.vectors.tr_mul(&DVector::from_vec(gc));
                for (k, i) in range.enumerate() {
                    let d = proj[k] * scales[k];
                    out[i] += d;
                    if k > 0 {
                        out[ia] += d * theta[i];
                    }
                }
            }

            let mut gcoef = vec![0.0; self.n_cohort_fit];
            for (c, basis) in self.cohort_local[..n_in].iter().enumerate() {
                basis.scatter(g.s_gamma[c], &mut gcoef);
            }
            let gcoef = DVector::from_vec(gcoef);
            let sig_g = st.sigma_gamma(s);
            let gz = self.cohort_loading.tr_mul(&gcoef) * sig_g;
            for (k, i) in b.z_gamma.clone().enumerate() {
                out[i] += gz[k];
            }
            out[b.log_sigma_gamma] += coefs[s].iter().zip(gcoef.iter()).map(|(a, b)| a * b).sum::<f64>();

            let (_, tr) = &old_tr[s];
            out[b.beta_old0] += g.eta[0];
            for (j, &i) in b.old_raw.iter().enumerate() {
                out[i] += (0..3).map(|r| g.eta[r + 1] * tr.jacobian[r][j]).sum::<f64>();
            }
            out[b.infant[0]] += g.infant[0];
            out[b.infant[1]] += g.infant[1];
            out[b.log_phi] += g.phi * st.phi(s);
            out[lay.log_psi] += g.log_psi;
            gkappa.push(DVector::from_column_slice(&g.kappa));
        }

        let q = &self.period_loading;
        match st.rho() {
            None => {
                let sk = st.sigma_kappa(0);
                let u = q.tr_mul(&gkappa[0]);
                for (k, i) in lay.z_kappa[0].clone().enumerate() {
                    out[i] += sk * u[k];
                }
                out[lay.log_sigma_kappa[0]] += dot(&kappa[0], gkappa[0].as_slice());
            }
            Some(rho) => {
                let (sf, sm) = (st.sigma_kappa(0), st.sigma_kappa(1));
                let r = (1.0 - rho * rho).sqrt();
                let uf = q.tr_mul(&gkappa[0]);
                let um = q.tr_mul(&gkappa[1]);
                let zf = st.z_kappa(0);
                let zm = st.z_kappa(1);
                for (k, i) in lay.z_kappa[0].clone().enumerate() {
                    out[i] += sf * uf[k] + sm * rho * um[k];
                }
                for (k, i) in lay.z_kappa[1].clone().enumerate() {
                    out[i] += sm * r * um[k];
                }
                out[lay.log_sigma_kappa[0]] += dot(&kappa[0], gkappa[0].as_slice());
                out[lay.log_sigma_kappa[1]] += dot(&kappa[1], gkappa[1].as_slice());
                let d_rho: f64 = (0..zf.len()).map(|k| sm * (zf[k] - rho / r * zm[k]) * um[k]).sum();
                out[lay.logit_rho.unwrap()] += d_rho * rho * (1.0 - rho);
            }
        }
        total
    }

    /// Prior terms including transform Jacobians; adds their gradient to `grad`.
    fn prior_terms(
        &self,
        st: &ParameterState,
        old_tr: &[(OldAgeParams, OldAgeTransform)],
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let lay = &self.layout;
        let v = st.values;
        let var = PRIOR_SD * PRIOR_SD;
        let mut lp = 0.0;
        let add = |i: usize, d: f64, grad: &mut Option<&mut [f64]>| {
            if let Some(g) = grad.as_deref_mut() {
                g[i] += d;
            }
        };
        // half-normal on a scale sampled on the log axis, with Jacobian
        let half_normal = |i: usize, lp: &mut f64, grad: &mut Option<&mut [f64]>| {
            let s2 = (2.0 * v[i]).exp();
            *lp += -0.5 * s2 / var + v[i];
            add(i, 1.0 - s2 / var, grad);
        };
        for (s, b) in lay.blocks.iter().enumerate() {
            for i in lay.smooth_scale_indices(s) {
                half_normal(i, &mut lp, &mut grad);
            }
            half_normal(b.log_sigma_gamma, &mut lp, &mut grad);
            for (which, range, [ia, ib]) in [
                (0, b.beta_alpha.clone(), b.log_sigma_alpha),
                (1, b.beta_beta.clone(), b.log_sigma_beta),
            ] {
                if lay.noncentred[which] {
                    // c₀ ~ N(0, σ_B²), whitened coordinates ~ N(0, 1)
                    let c0 = range.start;
                    let vb = (2.0 * v[ib]).exp();
                    lp += -0.5 * v[c0] * v[c0] / vb - v[ib];
                    add(c0, -v[c0] / vb, &mut grad);
                    add(ib, v[c0] * v[c0] / vb - 1.0, &mut grad);
                    for i in range.skip(1) {
                        lp += -0.5 * v[i] * v[i];
                        add(i, -v[i], &mut grad);
                    }
                    continue;
                }
                let e = smooth_prior(&v[range.clone()], v[ia].exp(), v[ib].exp());
                lp += e.log_density;
                if let Some(g) = grad.as_deref_mut() {
                    for (k, i) in range.enumerate() {
                        g[i] += e.d_beta[k];
                    }
                    g[ia] += e.d_log_sigma_a;
                    g[ib] += e.d_log_sigma_b;
                }
            }
            for i in b.z_gamma.clone() {
                lp += -0.5 * v[i] * v[i];
                add(i, -v[i], &mut grad);
            }
            // normal priors on natural-scale old-age and infant coefficients
            let (old, tr) = &old_tr[s];
            let nat = [old.b0, old.b1, old.b2, old.b3];
            lp += -0.5 * nat.iter().map(|b| b * b).sum::<f64>() / var + tr.log_jacobian;
            add(b.beta_old0, -old.b0 / var, &mut grad);
            for (j, &i) in b.old_raw.iter().enumerate() {
                let d: f64 = (0..3).map(|r| -nat[r + 1] / var * tr.jacobian[r][j]).sum();
                add(i, d + 1.0, &mut grad);
            }
            for &i in &b.infant {
                lp += -0.5 * v[i] * v[i] / var;
                add(i, -v[i] / var, &mut grad);
            }
        }
        for s in 0..lay.n_sexes() {
            half_normal(lay.log_sigma_kappa[s], &mut lp, &mut grad);
            for i in lay.z_kappa[s].clone() {
                lp += -0.5 * v[i] * v[i];
                add(i, -v[i], &mut grad);
            }
        }
        if let Some(i) = lay.logit_rho {
            // uniform on (0, 1) pulled back through the logistic map
            let rho = logistic(v[i]);
            lp += rho.ln() + (1.0 - rho).ln();
            add(i, 1.0 - 2.0 * rho, &mut grad);
        }
        let lpsi = v[lay.log_psi];
        lp += -0.5 * lpsi * lpsi;
        add(lay.log_psi, -lpsi, &mut grad);
        lp
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
