//! Simulated mortality data with a known parameter state, for recovery and
//! closed-loop coverage checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::forecast::extend_components;
use crate::forecast::fan::{quantile, QuantileRule};
use crate::ingest::{HmdRecord, HmdTable, MortalityDataset, Sex};
use crate::model::{untransform_old_age_params, ModelComponents, ModelError, ModelSpec, MortalityModel, SexMode};
use nalgebra::DVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub sex_mode: SexMode,
    pub x_old: u32,
    pub max_age: u32,
    pub first_year: i32,
    pub n_fit_years: usize,
    /// Years simulated past the fit window for hold-back checks.
    pub n_holdback: usize,
    /// Exposure at age 0; it tapers linearly to 70% at the top age.
    pub exposure: f64,
    pub sigma_kappa: f64,
    pub sigma_gamma: f64,
    pub phi: f64,
    pub log_psi: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            sex_mode: SexMode::Single,
            x_old: 50,
            max_age: 60,
            first_year: 1990,
            n_fit_years: 20,
            n_holdback: 0,
            exposure: 2e5,
            sigma_kappa: 0.03,
            sigma_gamma: 0.03,
            phi: 1000.0,
            log_psi: 0.0,
            rho: 0.9,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn last_year(&self) -> i32 {
        self.first_year + (self.n_fit_years + self.n_holdback) as i32 - 1
    }

    pub fn last_fit_year(&self) -> i32 {
        self.first_year + self.n_fit_years as i32 - 1
    }

    /// Spec of the fit-window model (horizon = hold-back length, at least 1).
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(
            self.x_old,
            (0, self.max_age),
            (self.first_year, self.last_fit_year()),
            self.n_holdback.max(1) as u32,
            self.sex_mode,
        )
    }

    fn sexes(&self) -> Vec<Sex> {
        match self.sex_mode {
            SexMode::Single => vec![Sex::Female],
            SexMode::Joint => vec![Sex::Female, Sex::Male],
        }
    }
}

/// Level of the age smooth: falls over the first few ages, then rises
/// log-linearly.
pub fn alpha_curve(age: f64) -> f64 {
    -7.6 + 0.09 * (age - 30.0) + 1.5 * (-age / 4.0).exp()
}

/// Improvement rate per unit of scaled time, slowly weakening with age.
pub fn beta_curve(age: f64) -> f64 {
    -0.28 + 0.04 * age / 30.0
}

#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub config: SyntheticConfig,
    /// Fit-window model; `theta` is a state of it.
    pub model: MortalityModel,
    pub theta: Vec<f64>,
    /// Components extended through the hold-back years.
    pub extended: ModelComponents,
    /// Deaths and exposures over fit and hold-back years, one per sex.
    pub datasets: Vec<MortalityDataset>,
}

impl SyntheticTruth {
    /// Data restricted to the fit window.
    pub fn fit_datasets(&self) -> Vec<MortalityDataset> {
        let years = self.config.first_year..=self.config.last_fit_year();
        self.datasets
            .iter()
            .map(|d| d.restrict_years(years.clone()).expect("fit years inside data"))
            .collect()
    }

    pub fn log_rate(&self, sex: usize, age: u32, year: i32) -> f64 {
        self.model
            .log_rate(&self.extended.sexes[sex], self.extended.log_psi, age, year)
    }

    /// `(s_α, s_β)` at a GAM age.
    pub fn smooths(&self, sex: usize, age: u32) -> (f64, f64) {
        self.model.gam_smooths(&self.extended.sexes[sex], age)
    }

    pub fn cohort_effect(&self, sex: usize, cohort: i32) -> f64 {
        self.model.cohort_effect(&self.extended.sexes[sex].cohort_coef, cohort)
    }

    pub fn kappa(&self, sex: usize, year: i32) -> f64 {
        self.extended.sexes[sex].kappa[(year - self.config.first_year) as usize]
    }
}

/// Deaths and exposures as HMD 1x1 tables. A sex without a dataset, and
/// any excluded cell, is written as the "." missing token. All datasets must
/// share one grid starting at age 0.
pub fn to_hmd_tables(datasets: &[MortalityDataset]) -> (HmdTable, HmdTable) {
    let grid = &datasets[0];
    assert_eq!(grid.ages[0], 0, "HMD tables start at age 0");
    let max_age = *grid.ages.last().unwrap();
    let table = |title: &str, pick: &dyn Fn(&MortalityDataset, usize, usize) -> f64| {
        let mut records = Vec::with_capacity(grid.deaths.len());
        for (t, &year) in grid.years.iter().enumerate() {
            for (a, &age) in grid.ages.iter().enumerate() {
                let value = |sex: Sex| {
                    let d = datasets.iter().find(|d| d.sex == sex)?;
                    d.is_included(a, t).then(|| pick(d, a, t))
                };
                let (female, male) = (value(Sex::Female), value(Sex::Male));
                let total = match (female, male) {
                    (None, None) => None,
                    (f, m) => Some(f.unwrap_or(0.0) + m.unwrap_or(0.0)),
                };
                records.push(HmdRecord {
                    year,
                    age,
                    open_interval: false,
                    female,
                    male,
                    total,
                });
            }
        }
        HmdTable {
            header: vec![
                format!("Simulated, {title} (period 1x1)"),
                String::new(),
                "  Year      Age        Female          Male         Total".into(),
            ],
            records,
            max_age,
        }
    };
    (
        table("Deaths", &|d, a, t| d.deaths_at(a, t)),
        table("Exposure to risk", &|d, a, t| d.exposure_at(a, t)),
    )
}

fn placeholder(sex: Sex, cfg: &SyntheticConfig, last_year: i32) -> MortalityDataset {
    let n = (cfg.max_age as usize + 1) * (last_year - cfg.first_year + 1) as usize;
    MortalityDataset::new(sex, 0..=cfg.max_age, cfg.first_year..=last_year, vec![0.0; n], vec![1.0; n])
        .expect("regular grid")
}

fn exposure_at(cfg: &SyntheticConfig, age: u32) -> f64 {
    cfg.exposure * (1.0 - 0.3 * age as f64 / cfg.max_age.max(1) as f64)
}

/// Builds the truth state and simulates negative binomial deaths.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticTruth, ModelError> {
    let spec = cfg.spec();
    let sexes = cfg.sexes();
    let shells: Vec<MortalityDataset> = sexes
        .iter()
        .map(|&s| placeholder(s, cfg, cfg.last_fit_year()))
        .collect();
    let model = MortalityModel::new(spec, &shells)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lay = model.layout.clone();
    let mut th = vec![0.0; lay.dim()];

    // least-squares spline coefficients for the target curves at the GAM ages
    let basis = &model.age_spline.basis;
    let svd = basis.clone().svd(true, true);
    let fit = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let y = DVector::from_iterator(
            model.age_spline.points.len(),
            model.age_spline.points.iter().map(|&x| f(x)),
        );
        svd.solve(&y, 1e-12).expect("full svd").as_slice().to_vec()
    };
    let coef_alpha = fit(&alpha_curve);
    let coef_beta = fit(&beta_curve);
    for (s, b) in lay.blocks.iter().enumerate() {
        // the second sex sits a little higher with a later infant decline
        let shift = if s == 1 { 0.3 } else { 0.0 };
        th[b.log_sigma_alpha[0]] = 0.3f64.ln();
        th[b.log_sigma_alpha[1]] = 5.0f64.ln();
        th[b.log_sigma_beta[0]] = 0.3f64.ln();
        th[b.log_sigma_beta[1]] = 1.0f64.ln();
        let shifted: Vec<f64> = coef_alpha.iter().map(|v| v + shift).collect();
        model.set_smooth_coef(&mut th, s, 0, &shifted);
        model.set_smooth_coef(&mut th, s, 1, &coef_beta);
        for j in b.z_gamma.clone() {
            th[j] = StandardNormal.sample(&mut rng);
        }
        th[b.log_sigma_gamma] = cfg.sigma_gamma.ln();
        th[b.infant[0]] = -5.8 + shift;
        th[b.infant[1]] = -0.35;
        th[b.log_phi] = cfg.phi.ln();

        // old-age slopes, then an intercept continuing the GAM at x_old in
        // the middle fitted year
        let h = model.horizon_index();
        let (b1, b2, b3) = (0.9, -0.2, 0.0);
        let raw = untransform_old_age_params(b1, b2, b3, h)
            .ok_or_else(|| ModelError::Spec("old-age truth outside the constrained region".into()))?;
        for (k, j) in b.old_raw.iter().enumerate() {
            th[*j] = raw[k];
        }
        let mid = cfg.first_year + (cfg.n_fit_years as i32 - 1) / 2;
        let x_old = cfg.x_old as f64;
        let target = alpha_curve(x_old) + shift + beta_curve(x_old) * model.axis.time(mid as f64);
        let m = target.exp();
        let eta = (m / (1.0 - m / cfg.log_psi.exp())).ln();
        th[b.beta_old0] = eta - b1 * model.axis.age(x_old) - b2 * model.old_age_time(mid);
    }
    for r in &lay.z_kappa {
        for j in r.clone() {
            th[j] = StandardNormal.sample(&mut rng);
        }
    }
    for &j in &lay.log_sigma_kappa {
        th[j] = cfg.sigma_kappa.ln();
    }
    if let Some(j) = lay.logit_rho {
        th[j] = (cfg.rho / (1.0 - cfg.rho)).ln();
    }
    th[lay.log_psi] = cfg.log_psi;

    let comp = model.components(&th);
    let extended = extend_components(&model, &comp, cfg.n_holdback, &mut rng)
        .map_err(|e| ModelError::Spec(e.to_string()))?;

    let mut datasets = Vec::with_capacity(sexes.len());
    for (s, &sex) in sexes.iter().enumerate() {
        let c = &extended.sexes[s];
        let gamma = Gamma::new(c.phi, 1.0 / c.phi).expect("φ > 0");
        let mut deaths = Vec::new();
        let mut exposures = Vec::new();
        for age in 0..=cfg.max_age {
            for year in cfg.first_year..=cfg.last_year() {
                let e = exposure_at(cfg, age) * (1.0 + 0.02 * rng.random_range(-1.0..1.0));
                let mu = e * model.log_rate(c, extended.log_psi, age, year).exp();
                let lam = mu * gamma.sample(&mut rng);
                let d: f64 = Poisson::new(lam).map(|p| p.sample(&mut rng)).unwrap_or(0.0);
                deaths.push(d);
                exposures.push(e);
            }
        }
        datasets.push(
            MortalityDataset::new(sex, 0..=cfg.max_age, cfg.first_year..=cfg.last_year(), deaths, exposures)
                .map_err(|e| ModelError::Data(e.to_string()))?,
        );
    }
    Ok(SyntheticTruth {
        config: cfg.clone(),
        model,
        theta: th,
        extended,
        datasets,
    })
}


/// Share of grid points whose truth lies inside the central posterior band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub level: f64,
    pub s_alpha: f64,
    pub s_beta: f64,
    pub s_gamma: f64,
    pub kappa: f64,
}

impl Recovery {
    pub fn worst(&self) -> f64 {
        self.s_alpha.min(self.s_beta).min(self.s_gamma).min(self.kappa)
    }
}

fn band_share(truth: &[f64], samples: &[Vec<f64>], level: f64) -> f64 {
    let rule = QuantileRule::default();
    let inside = truth
        .iter()
        .enumerate()
        .filter(|&(j, &v)| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            col.sort_by(f64::total_cmp);
            let lo = quantile(&col, 0.5 - level / 2.0, rule);
            let hi = quantile(&col, 0.5 + level / 2.0, rule);
            lo <= v && v <= hi
        })
        .count();
    inside as f64 / truth.len() as f64
}

/// Checks the GAM smooths, in-sample cohort effects and κ of every sex
/// against posterior draws of the truth's model.
pub fn recovery(truth: &SyntheticTruth, draws: &[Vec<f64>], level: f64) -> Recovery {
    let m = &truth.model;
    let ages: Vec<u32> = (1..truth.config.x_old).collect();
    let cohorts: Vec<i32> = (m.first_cohort..=m.last_cohort).collect();
    let n_fit = m.n_years();
    let grid = |c: &ModelComponents| -> [Vec<f64>; 4] {
        let mut out: [Vec<f64>; 4] = Default::default();
        for sc in &c.sexes {
            for &a in &ages {
                let (sa, sb) = m.gam_smooths(sc, a);
                out[0].push(sa);
                out[1].push(sb);
            }
            out[2].extend(cohorts.iter().map(|&k| m.cohort_effect(&sc.cohort_coef, k)));
            out[3].extend_from_slice(&sc.kappa[..n_fit]);
        }
        out
    };
    let want = grid(&truth.extended);
    let got: Vec<[Vec<f64>; 4]> = draws.iter().map(|d| grid(&m.components(d))).collect();
    let share = |k: usize| {
        let samples: Vec<Vec<f64>> = got.iter().map(|g| g[k].clone()).collect();
        band_share(&want[k], &samples, level)
    };
    Recovery {
        level,
        s_alpha: share(0),
        s_beta: share(1),
        s_gamma: share(2),
        kappa: share(3),
    }
}
