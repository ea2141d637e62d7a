//! Split-chain R-hat and Geyer effective sample size.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when the parameter never moves.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        // an odd middle draw is dropped so both halves have equal length
        out.push(&c[..h]);
        out.push(&c[c.len() - h..]);
    }
    out
}

/// Within-chain mean variance `W` and pooled estimate `var⁺`.
fn variance_components(chains: &[&[f64]]) -> (f64, f64) {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = chains.iter().map(|c| sample_var(c)).sum::<f64>() / chains.len() as f64;
    let b_over_n = sample_var(&means);
    (w, (n - 1.0) / n * w + b_over_n)
}

fn is_constant(chains: &[&[f64]]) -> bool {
    let first = chains[0][0];
    chains.iter().all(|c| c.iter().all(|&v| v == first))
}

/// Split-chain potential scale reduction factor.
pub fn split_rhat(chains: &[&[f64]]) -> Option<f64> {
    if chains.is_empty() || chains[0].len() < 4 || is_constant(chains) {
        return None;
    }
    let halves = split(chains);
    let (w, var_plus) = variance_components(&halves);
    if w <= 0.0 {
        return None;
    }
    Some((var_plus / w).sqrt())
}

fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Integrated autocorrelation time from an autocorrelation function via
/// Geyer's initial monotone positive sequence.
fn geyer_tau(n: usize, rho: impl Fn(usize) -> f64) -> f64 {
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n.saturating_sub(2) {
        let pair = if t == 0 { 1.0 + rho(1) } else { rho(t) + rho(t + 1) };
        if !(pair > 0.0) {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 2;
    }
    (-1.0 + 2.0 * sum).max(1e-12)
}

/// Multi-chain ESS from averaged within-chain autocovariances.
fn ess_within(chains: &[&[f64]]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let (w, var_plus) = variance_components(chains);
    if var_plus <= 0.0 {
        return None;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let rho = |t: usize| {
        let acov = chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, t))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - acov) / var_plus
    };
    let tau = geyer_tau(n, rho);
    let total = (m * n) as f64;
    Some((total / tau).min(total * total.log10()))
}

/// ESS of the grand mean estimated from the draw-wise average across chains.
/// Cross-chain dependence inflates the variance of that average, so this
/// catches chains that are copies of each other.
fn ess_pooled(chains: &[&[f64]]) -> Option<f64> {
    let m = chains.len();
    let n = chains[0].len();
    let avg: Vec<f64> = (0..n)
        .map(|i| chains.iter().map(|c| c[i]).sum::<f64>() / m as f64)
        .collect();
    let (_, var_plus) = variance_components(chains);
    let mu = mean(&avg);
    let v0 = autocov(&avg, mu, 0);
    if v0 <= 0.0 || var_plus <= 0.0 {
        return None;
    }
    let tau = geyer_tau(n, |t| autocov(&avg, mu, t) / v0);
    Some(n as f64 * var_plus / (tau * v0))
}

/// Effective sample size of the pooled draws; the smaller of the
/// within-chain estimate and the cross-chain-aware one.
pub fn ess(chains: &[&[f64]]) -> Option<f64> {
    if chains.is_empty() || chains[0].len() < 4 || is_constant(chains) {
        return None;
    }
    let a = ess_within(chains)?;
    if chains.len() < 2 {
        return Some(a);
    }
    Some(match ess_pooled(chains) {
        Some(b) => a.min(b),
        None => a,
    })
}

/// Diagnostics for every coordinate of `chains[chain][draw][param]`.
pub fn param_diagnostics(names: &[String], chains: &[Vec<Vec<f64>>]) -> Vec<ParamDiagnostic> {
    let dim = names.len();
    (0..dim)
        .map(|j| {
            let cols: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|d| d[j]).collect())
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            let all: Vec<f64> = cols.concat();
            ParamDiagnostic {
                name: names[j].clone(),
                mean: mean(&all),
                sd: if all.len() > 1 { sample_var(&all).sqrt() } else { 0.0 },
                rhat: split_rhat(&refs),
                ess: ess(&refs),
            }
        })
        .collect()
}
