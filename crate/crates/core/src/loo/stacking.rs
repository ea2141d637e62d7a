use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{LooError, LooResult};
use crate::forecast::DrawRef;

/// Change in the mean per-cell log score at which the weight iteration
/// stops. Measured per cell rather than relative to the objective so that
/// rescaling a cell's densities cannot move the stopping point.
pub const STACK_TOL: f64 = 1e-10;
pub const STACK_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingWeights {
    pub weights: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `Σᵢ log Σₖ wₖ pᵢₖ` at the returned weights.
    pub objective: f64,
    /// Objective after each update, starting from uniform weights.
    pub trace: Vec<f64>,
}

/// Maximizes `Σᵢ log Σₖ wₖ exp(lpdₖᵢ)` over the simplex. `lpd[k][i]` is the
/// leave-one-out log density of cell `i` under model `k`.
///
/// The multiplicative update `wₖ ← wₖ · mean_i(pᵢₖ / Σⱼ wⱼ pᵢⱼ)` is the EM step
/// for mixture weights, so the objective never decreases.
pub fn stack_weights(lpd: &[Vec<f64>]) -> Result<StackingWeights, LooError> {
    let k = lpd.len();
    if k == 0 {
        return Err(LooError::Stacking("no models".into()));
    }
    let n = lpd[0].len();
    if n == 0 || lpd.iter().any(|r| r.len() != n) {
        return Err(LooError::Stacking("models must score the same non-empty cell set".into()));
    }
    if lpd.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LooError::Stacking("non-finite log density".into()));
    }
    // per-cell shift so the largest density in each cell is 1
    let shift: Vec<f64> = (0..n)
        .map(|i| lpd.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let p: Vec<Vec<f64>> = lpd
        .iter()
        .map(|r| r.iter().zip(&shift).map(|(v, s)| (v - s).exp()).collect())
        .collect();
    let base: f64 = shift.iter().sum();
    let mix = |w: &[f64], i: usize| -> f64 { (0..k).map(|j| w[j] * p[j][i]).sum() };
    let objective = |w: &[f64]| -> f64 { base + (0..n).map(|i| mix(w, i).ln()).sum::<f64>() };

    let mut w = vec![1.0 / k as f64; k];
    let mut obj = objective(&w);
    let mut trace = vec![obj];
    if k == 1 {
        return Ok(StackingWeights {
            weights: w,
            converged: true,
            iterations: 0,
            objective: obj,
            trace,
        });
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < STACK_MAX_ITER {
        iterations += 1;
        let mixes: Vec<f64> = (0..n).map(|i| mix(&w, i)).collect();
        let mut next: Vec<f64> = (0..k)
            .map(|j| w[j] * p[j].iter().zip(&mixes).map(|(a, m)| a / m).sum::<f64>() / n as f64)
            .collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let new_obj = objective(&next);
        if new_obj < obj {
            // rounding at the optimum; keep the better iterate
            converged = true;
            break;
        }
        let rel = (new_obj - obj) / n as f64;
        w = next;
        obj = new_obj;
        trace.push(obj);
        if rel < STACK_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("stacking weights did not converge in {STACK_MAX_ITER} iterations");
    }
    Ok(StackingWeights {
        weights: w,
        converged,
        iterations,
        objective: obj,
        trace,
    })
}

/// One row of the model comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooComparison {
    pub model: String,
    pub elpd: f64,
    pub se: f64,
    pub looic: f64,
    /// `elpd − elpd_best`, 0 for the best model.
    pub elpd_diff: f64,
    /// Standard error of the pointwise difference against the best model.
    pub se_diff: f64,
    pub n_high_k: usize,
    pub weight: Option<f64>,
}

/// Compares models scored on the same cells, best first by elpd.
pub fn compare(ids: &[String], results: &[LooResult], weights: Option<&[f64]>) -> Result<Vec<LooComparison>, LooError> {
    if ids.len() != results.len() || results.is_empty() {
        return Err(LooError::Stacking("one id per LOO result required".into()));
    }
    if results.iter().any(|r| r.cells != results[0].cells) {
        return Err(LooError::Stacking("LOO results cover different cells".into()));
    }
    let best = (0..results.len())
        .max_by(|&a, &b| results[a].elpd_total.total_cmp(&results[b].elpd_total))
        .expect("non-empty");
    let mut rows: Vec<LooComparison> = results
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let d: Vec<f64> = r
                .elpd_pointwise
                .iter()
                .zip(&results[best].elpd_pointwise)
                .map(|(a, b)| a - b)
                .collect();
            let n = d.len() as f64;
            let mean = d.iter().sum::<f64>() / n;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            LooComparison {
                model: ids[m].clone(),
                elpd: r.elpd_total,
                se: r.se_elpd(),
                looic: r.looic(),
                elpd_diff: r.elpd_total - results[best].elpd_total,
                se_diff: (n * var).sqrt(),
                n_high_k: r.n_high_k,
                weight: weights.map(|w| w[m]),
            }
        })
        .collect();
    rows.sort_by(|a, b| b.elpd.total_cmp(&a.elpd));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackMode {
    /// `⌊wₖ n⌋` draws per model, remaining slots to the largest remainders;
    /// draws evenly spaced through each model's store.
    #[default]
    Stratified,
    /// Source model drawn independently per output draw, then a uniform draw.
    Multinomial,
}

/// Picks `n_out` draws across models in proportion to the weights.
/// `available[k]` is the number of stored draws for model `k`.
pub fn stacked_draws<R: Rng + ?Sized>(
    available: &[usize],
    weights: &[f64],
    n_out: usize,
    mode: StackMode,
    rng: &mut R,
) -> Result<Vec<DrawRef>, LooError> {
    if available.len() != weights.len() || weights.is_empty() {
        return Err(LooError::Config("one weight per model required".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
        return Err(LooError::Config("weights must be non-negative and sum to 1".into()));
    }
    for (k, (&w, &a)) in weights.iter().zip(available).enumerate() {
        if w > 0.0 && a == 0 {
            return Err(LooError::Config(format!("model {k} has weight {w} but no stored draws")));
        }
    }
    match mode {
        StackMode::Stratified => {
            let exact: Vec<f64> = weights.iter().map(|w| w * n_out as f64).collect();
            let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut order: Vec<usize> = (0..weights.len()).collect();
            order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
            let short = n_out - counts.iter().sum::<usize>();
            for &k in order.iter().take(short) {
                counts[k] += 1;
            }
            let mut out = Vec::with_capacity(n_out);
            for (k, &c) in counts.iter().enumerate() {
                if c > available[k] {
                    return Err(LooError::Config(format!(
                        "model {k} needs {c} draws but stores {}",
                        available[k]
                    )));
                }
                out.extend((0..c).map(|j| DrawRef {
                    source: k,
                    index: ((j as f64 + 0.5) * available[k] as f64 / c as f64).floor() as usize,
                }));
            }
            Ok(out)
        }
        StackMode::Multinomial => {
            let pick = WeightedIndex::new(weights).map_err(|e| LooError::Config(e.to_string()))?;
            Ok((0..n_out)
                .map(|_| {
                    let source = pick.sample(rng);
                    DrawRef {
                        source,
                        index: rng.random_range(0..available[source]),
                    }
                })
                .collect())
        }
    }
}
