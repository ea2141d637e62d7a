use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LooError;

/// Pareto k above which a cell's importance weights are unreliable.
pub const HIGH_K: f64 = 0.7;

/// Shape reported for a tail whose values are all equal.
pub const DEGENERATE_K: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub k: f64,
    pub sigma: f64,
    pub degenerate: bool,
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Generalized Pareto fit to exceedances by the Zhang–Stephens empirical
/// Bayes estimator, with the shape shrunk toward 0.5 as `(n k + 5)/(n + 10)`.
pub fn gpd_fit(tail: &[f64]) -> Result<GpdFit, LooError> {
    let n = tail.len();
    if n < 5 {
        return Err(LooError::ShortTail(n));
    }
    let mut x = tail.to_vec();
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] <= f64::EPSILON * x[n - 1].abs().max(1e-300) || x[n - 1] <= 0.0 {
        return Ok(GpdFit {
            k: DEGENERATE_K,
            sigma: 0.0,
            degenerate: true,
        });
    }
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&v| (-t * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let norm = log_sum_exp(&profile);
    let theta_hat: f64 = theta
        .iter()
        .zip(&profile)
        .map(|(t, l)| t * (l - norm).exp())
        .sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (k * n as f64 + 5.0) / (n as f64 + 10.0);
    Ok(GpdFit {
        k: if k.is_nan() { DEGENERATE_K } else { k },
        sigma,
        degenerate: k.is_nan(),
    })
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Draws in the smoothed tail: `ceil(min(0.2 S, 3 √S))`.
pub fn tail_length(s: usize) -> usize {
    (0.2 * s as f64).min(3.0 * (s as f64).sqrt()).ceil() as usize
}

/// Pareto-smooths log importance ratios. Returns the smoothed log weights,
/// shifted so the largest raw ratio is 0 and capped there, with the tail fit.
pub fn psis_smooth(log_ratios: &[f64]) -> Result<(Vec<f64>, GpdFit), LooError> {
    let s = log_ratios.len();
    let m = tail_length(s);
    if m < 5 || m >= s {
        return Err(LooError::ShortTail(m));
    }
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let tail_ids = &order[s - m..];
    let cutoff = lw[order[s - m - 1]];
    let exceed: Vec<f64> = tail_ids.iter().map(|&i| lw[i].exp() - cutoff.exp()).collect();
    let fit = gpd_fit(&exceed)?;
    if !fit.degenerate {
        for (z, &i) in tail_ids.iter().enumerate() {
            let p = (z as f64 + 0.5) / m as f64;
            lw[i] = (gpd_quantile(p, fit.k, fit.sigma) + cutoff.exp()).ln();
        }
    }
    for v in lw.iter_mut() {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
    Ok((lw, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooResult {
    pub elpd_total: f64,
    pub elpd_pointwise: Vec<f64>,
    pub pareto_k: Vec<f64>,
    pub n_high_k: usize,
    /// Columns of the input matrix the pointwise values refer to.
    pub cells: Vec<usize>,
    /// Columns dropped for non-finite log-likelihoods.
    pub excluded: Vec<usize>,
    /// Cells whose tail weights were all equal and needed no smoothing.
    pub degenerate: Vec<usize>,
}

impl LooResult {
    pub fn looic(&self) -> f64 {
        -2.0 * self.elpd_total
    }

    pub fn se_elpd(&self) -> f64 {
        let n = self.elpd_pointwise.len() as f64;
        let mean = self.elpd_total / n;
        let var = self.elpd_pointwise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (n * var).sqrt()
    }

    pub fn n_cells(&self) -> usize {
        self.elpd_pointwise.len()
    }
}

/// PSIS-LOO from a `[draw][cell]` matrix of pointwise log-likelihoods.
pub fn psis_loo(loglik: &[Vec<f64>]) -> Result<LooResult, LooError> {
    let s = loglik.len();
    if s == 0 {
        return Err(LooError::Shape("no draws".into()));
    }
    let n = loglik[0].len();
    if loglik.iter().any(|r| r.len() != n) {
        return Err(LooError::Shape("ragged rows".into()));
    }
    let per_cell: Vec<Result<Option<(f64, GpdFit)>, LooError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ll: Vec<f64> = loglik.iter().map(|r| r[i]).collect();
            if ll.iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            let neg: Vec<f64> = ll.iter().map(|v| -v).collect();
            let (lw, fit) = psis_smooth(&neg)?;
            let num: Vec<f64> = lw.iter().zip(&ll).map(|(w, l)| w + l).collect();
            Ok(Some((log_sum_exp(&num) - log_sum_exp(&lw), fit)))
        })
        .collect();
    let mut out = LooResult {
        elpd_total: 0.0,
        elpd_pointwise: Vec::with_capacity(n),
        pareto_k: Vec::with_capacity(n),
        n_high_k: 0,
        cells: Vec::with_capacity(n),
        excluded: Vec::new(),
        degenerate: Vec::new(),
    };
    for (i, r) in per_cell.into_iter().enumerate() {
        match r? {
            None => out.excluded.push(i),
            Some((elpd, fit)) => {
                out.cells.push(i);
                out.elpd_pointwise.push(elpd);
                out.pareto_k.push(fit.k);
                if fit.degenerate {
                    out.degenerate.push(i);
                } else if fit.k > HIGH_K {
                    out.n_high_k += 1;
                }
            }
        }
    }
    if !out.excluded.is_empty() {
        log::warn!("{} cells with non-finite log-likelihood left out of elpd", out.excluded.len());
    }
    out.elpd_total = out.elpd_pointwise.iter().sum();
    Ok(out)
}
