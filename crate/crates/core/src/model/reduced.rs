//! A small age-period model used to check importance-sampling LOO against
//! brute-force refits: `log m_xt = a_x + b_x·t + κ_t` with the same
//! constrained, non-centred period walk and negative binomial noise as the
//! full model, but cheap enough to refit once per cell.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::nb::{log_factorial, nb_terms, nb_value_dlogmu};
use super::{ModelError, PRIOR_SD};
use crate::constraints::{cumsum_matrix, period_transform};
use crate::ingest::{MortalityDataset, Sex};

/// Prior sd of `log φ`; the reduced model keeps every prior proper.
pub const LOG_PHI_PRIOR_SD: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct ReducedModel {
    n_ages: usize,
    n_years: usize,
    deaths: Vec<f64>,
    log_exposure: Vec<f64>,
    log_fact: Vec<f64>,
    /// Cells that enter the likelihood, age-major.
    pub active: Vec<bool>,
    time: Vec<f64>,
    loading: DMatrix<f64>,
    names: Vec<String>,
}

impl ReducedModel {
    pub fn new(data: &MortalityDataset) -> Result<Self, ModelError> {
        let n_years = data.n_years();
        let period = period_transform(n_years, 1.0)?;
        let loading = cumsum_matrix(n_years) * period.innovation_loading();
        let mid = 0.5 * (n_years as f64 - 1.0);
        let n_ages = data.n_ages();
        let mut names: Vec<String> = (0..n_ages).map(|i| format!("a[{i}]")).collect();
        names.extend((0..n_ages).map(|i| format!("b[{i}]")));
        names.extend((0..n_years - 2).map(|i| format!("z_kappa[{i}]")));
        names.push("log_sigma_kappa".into());
        names.push("log_phi".into());
        Ok(Self {
            n_ages,
            n_years,
            deaths: data.deaths.clone(),
            log_exposure: data.exposures.iter().map(|e| e.ln()).collect(),
            log_fact: data.deaths.iter().map(|&d| log_factorial(d)).collect(),
            active: data.included.clone(),
            time: (0..n_years).map(|t| t as f64 - mid).collect(),
            loading,
            names,
        })
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_cells(&self) -> usize {
        self.n_ages * self.n_years
    }

    /// Indices of cells that were included in the source data.
    pub fn active_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|&i| self.active[i]).collect()
    }

    /// Same model with one cell dropped from the likelihood.
    pub fn without_cell(&self, cell: usize) -> Self {
        let mut m = self.clone();
        m.active[cell] = false;
        m
    }

    fn kappa(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.n_years - 2;
        let z = &theta[2 * self.n_ages..2 * self.n_ages + k];
        let sigma = theta[2 * self.n_ages + k].exp();
        (0..self.n_years)
            .map(|t| sigma * (0..k).map(|j| self.loading[(t, j)] * z[j]).sum::<f64>())
            .collect()
    }

    fn log_mu(&self, theta: &[f64], kappa: &[f64], cell: usize) -> f64 {
        let (a, t) = (cell / self.n_years, cell % self.n_years);
        self.log_exposure[cell] + theta[a] + theta[self.n_ages + a] * self.time[t] + kappa[t]
    }

    fn phi(&self, theta: &[f64]) -> f64 {
        theta[self.dim() - 1].exp()
    }

    /// Log density of one cell, whether or not it is active.
    pub fn cell_loglik(&self, theta: &[f64], cell: usize) -> f64 {
        let kappa = self.kappa(theta);
        let v = nb_value_dlogmu(
            self.deaths[cell],
            self.log_mu(theta, &kappa, cell),
            self.phi(theta),
            self.log_fact[cell],
        )
        .0;
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `[draw][cell]` over `cells`.
    pub fn pointwise_loglik(&self, draws: &[Vec<f64>], cells: &[usize]) -> Vec<Vec<f64>> {
        draws
            .iter()
            .map(|d| cells.iter().map(|&c| self.cell_loglik(d, c)).collect())
            .collect()
    }

    pub fn log_posterior_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        assert_eq!(theta.len(), self.dim(), "state length");
        grad.fill(0.0);
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let (na, k) = (self.n_ages, self.n_years - 2);
        let iz = 2 * na;
        let isig = iz + k;
        let iphi = isig + 1;
        let sigma = theta[isig].exp();
        let phi = theta[iphi].exp();
        let kappa = self.kappa(theta);

        let mut lp = 0.0;
        let mut d_kappa = vec![0.0; self.n_years];
        let mut d_phi = 0.0;
        for cell in 0..self.n_cells() {
            if !self.active[cell] {
                continue;
            }
            let (a, t) = (cell / self.n_years, cell % self.n_years);
            let nt = nb_terms(self.deaths[cell], self.log_mu(theta, &kappa, cell), phi, self.log_fact[cell]);
            lp += nt.value;
            grad[a] += nt.d_log_mu;
            grad[na + a] += nt.d_log_mu * self.time[t];
            d_kappa[t] += nt.d_log_mu;
            d_phi += nt.d_phi;
        }
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        // κ = σ·Q·z
        for j in 0..k {
            let qz: f64 = (0..self.n_years).map(|t| d_kappa[t] * self.loading[(t, j)]).sum();
            grad[iz + j] += sigma * qz;
        }
        grad[isig] += (0..self.n_years).map(|t| d_kappa[t] * kappa[t]).sum::<f64>();
        grad[iphi] += d_phi * phi;

        let v = PRIOR_SD * PRIOR_SD;
        for i in 0..2 * na {
            lp -= 0.5 * theta[i] * theta[i] / v;
            grad[i] -= theta[i] / v;
        }
        for j in 0..k {
            let z = theta[iz + j];
            lp -= 0.5 * z * z;
            grad[iz + j] -= z;
        }
        // half-normal on σ, sampled on the log scale
        lp += -0.5 * sigma * sigma / v + theta[isig];
        grad[isig] += -sigma * sigma / v + 1.0;
        let w = LOG_PHI_PRIOR_SD * LOG_PHI_PRIOR_SD;
        lp -= 0.5 * theta[iphi] * theta[iphi] / w;
        grad[iphi] -= theta[iphi] / w;
        lp
    }
}

/// Ground truth for [`simulate_reduced`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTruth {
    pub first_age: u32,
    pub first_year: i32,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub kappa: Vec<f64>,
    pub phi: f64,
    pub exposure: f64,
}

impl Default for ReducedTruth {
    fn default() -> Self {
        Self {
            first_age: 70,
            first_year: 2000,
            intercepts: vec![-4.1, -4.0, -3.9, -3.8, -3.7],
            slopes: vec![-0.02, -0.025, -0.02, -0.015, -0.01],
            kappa: vec![0.02, -0.03, 0.0, 0.01],
            phi: 60.0,
            exposure: 2.0e4,
        }
    }
}

/// NB counts drawn as a gamma–Poisson mixture.
pub fn simulate_reduced<R: Rng + ?Sized>(truth: &ReducedTruth, rng: &mut R) -> MortalityDataset {
    let (na, nt) = (truth.intercepts.len(), truth.kappa.len());
    let mid = 0.5 * (nt as f64 - 1.0);
    let mut deaths = Vec::with_capacity(na * nt);
    let mut exposures = Vec::with_capacity(na * nt);
    let gamma = Gamma::new(truth.phi, 1.0 / truth.phi).expect("phi > 0");
    for a in 0..na {
        for t in 0..nt {
            let wobble: f64 = StandardNormal.sample(rng);
            let e = truth.exposure * (1.0 + 0.05 * wobble).max(0.5);
            let mu = e * (truth.intercepts[a] + truth.slopes[a] * (t as f64 - mid) + truth.kappa[t]).exp();
            let lam = mu * gamma.sample(rng);
            let d: f64 = Poisson::new(lam).expect("positive mean").sample(rng);
            deaths.push(d);
            exposures.push(e);
        }
    }
    MortalityDataset::new(
        Sex::Female,
        truth.first_age..=truth.first_age + na as u32 - 1,
        truth.first_year..=truth.first_year + nt as i32 - 1,
        deaths,
        exposures,
    )
    .expect("well-formed grid")
}
