//! Identifiability constraints on the period and cohort effects: draw
//! constrained random walks and check the constraints hold exactly.
//!
//! cargo run --example period_constraints -- [years]

use mortcast::constraints::{cohort_transform, joint_transform, period_transform};
use mortcast::splines::SplineBlock;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let period = period_transform(t, 0.05)?;
    println!("period: {t} years, {} free coordinates", period.n_free());
    for _ in 0..3 {
        let eps = period.recover_innovations(&period.sample_eta_star(&mut rng));
        let kappa = period.accumulate(&eps);
        let level: f64 = kappa.iter().sum();
        let trend: f64 = kappa.iter().enumerate().map(|(i, k)| i as f64 * k).sum();
        println!("  kappa[..4] {:+.4?}  sum {level:+.1e}  sum t*kappa {trend:+.1e}", &kappa[..4]);
    }

    // cohort coefficients: zero first cohort, zero mean, zero last cohort
    let cohorts: Vec<f64> = (0..60).map(f64::from).collect();
    let block = SplineBlock::regular(cohorts, 4.0, 3)?;
    let cohort = cohort_transform(block.n_coef, &block.basis, 0.05)?;
    let eps = cohort.recover_innovations(&cohort.sample_eta_star(&mut rng));
    let coef = cohort.accumulate(&eps);
    let s_gamma = &block.basis * DVector::from_column_slice(&coef);
    println!(
        "cohort: first {:+.1e}, mean {:+.1e}, last {:+.1e}",
        s_gamma[0],
        s_gamma.mean(),
        s_gamma[s_gamma.len() - 1]
    );

    // two sexes with correlated innovations
    let joint = joint_transform(t, 0.04, 0.05, 0.9)?;
    let (mut f, mut m) = (Vec::new(), Vec::new());
    for _ in 0..4000 {
        let (ef, em) = joint.recover_innovations(&joint.sample_eta_star(&mut rng));
        f.extend(ef);
        m.extend(em);
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (mf, mm) = (mean(&f), mean(&m));
    let cov = f.iter().zip(&m).map(|(a, b)| (a - mf) * (b - mm)).sum::<f64>();
    let var = |x: &[f64], mu: f64| x.iter().map(|v| (v - mu).powi(2)).sum::<f64>();
    println!("joint: innovation correlation {:.3} (rho 0.9)", cov / (var(&f, mf) * var(&m, mm)).sqrt());
    Ok(())
}
