//! PSIS-LOO scores and stacking weights for a small menu of models, on a
//! toy problem with exact posterior draws.
//!
//! cargo run --release --example loo_stacking -- [n_obs]
//!
//! The data have sd 1.5; the candidates assume sd 1, 1.5 and 3. Stacking
//! should put nearly all weight on the middle model.

use mortcast::loo::{compare, psis_loo, stack_weights, stacked_draws, StackMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DRAWS: usize = 4000;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(200);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let y: Vec<f64> = (0..n).map(|_| Normal::new(0.3, 1.5).unwrap().sample(&mut rng)).collect();
    let ybar = y.iter().sum::<f64>() / n as f64;

    let sds = [1.0, 1.5, 3.0];
    let mut results = Vec::new();
    for &sd in &sds {
        // flat prior on the mean: mu | y ~ N(ybar, sd^2 / n)
        let post = Normal::new(ybar, sd / (n as f64).sqrt())?;
        let loglik: Vec<Vec<f64>> = (0..DRAWS)
            .map(|_| {
                let mu = post.sample(&mut rng);
                y.iter()
                    .map(|v| -0.5 * ((v - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln())
                    .collect()
            })
            .collect();
        results.push(psis_loo(&loglik)?);
    }
    let lpd: Vec<Vec<f64>> = results.iter().map(|r| r.elpd_pointwise.clone()).collect();
    let w = stack_weights(&lpd)?;
    println!("stacking converged {} after {} iterations", w.converged, w.iterations);

    let ids: Vec<String> = sds.iter().map(|s| format!("sd={s}")).collect();
    println!("{:<8} {:>9} {:>7} {:>9} {:>7} {:>6} {:>7}", "model", "elpd", "se", "diff", "se", "k>0.7", "weight");
    for row in compare(&ids, &results, Some(&w.weights))? {
        println!(
            "{:<8} {:>9.2} {:>7.2} {:>9.2} {:>7.2} {:>6} {:>7.3}",
            row.model,
            row.elpd,
            row.se,
            row.elpd_diff,
            row.se_diff,
            row.n_high_k,
            row.weight.unwrap_or(0.0)
        );
    }

    let picks = stacked_draws(&[DRAWS; 3], &w.weights, 1000, StackMode::Stratified, &mut rng)?;
    let per_model: Vec<usize> = (0..3).map(|k| picks.iter().filter(|p| p.source == k).count()).collect();
    println!("1000 stacked draws per model: {per_model:?}");
    Ok(())
}
