//! Simulates data from a known state, fits it by NUTS and checks how much of
//! the truth lands inside the 90% posterior bands.
//!
//! cargo run --release --example fit_synthetic -- [iterations] [seed] [target_acceptance]

use std::time::Instant;

use mortcast::model::MortalityModel;
use mortcast::sampler::{run_chains, ChainConfig, InitStrategy};
use mortcast::synthetic::{generate, recovery, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(2000);
    let seed = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(1);
    let target_acceptance = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(0.8);

    let truth = generate(&SyntheticConfig {
        seed,
        ..SyntheticConfig::default()
    })?;
    let model = MortalityModel::new(truth.model.spec.clone(), &truth.fit_datasets())?;
    println!("{} parameters, {} cells", model.dim(), model.n_cells());

    let config = ChainConfig {
        n_iterations: iterations,
        thin: 1,
        seed,
        target_acceptance,
        ..ChainConfig::default()
    };
    let start = Instant::now();
    let store = run_chains(&model, model.parameter_names(), &InitStrategy::default(), &config)?;
    let report = store.report();
    println!(
        "{:.1}s, step sizes {:?}, divergences {:.3}%, worst R-hat {:?}, min ESS {:?}",
        start.elapsed().as_secs_f64(),
        report.step_sizes,
        100.0 * report.divergence_rate,
        report.rhat_max,
        report.ess_min
    );
    let mut diag = store.diagnostics()?;
    diag.sort_by(|a, b| b.rhat.unwrap_or(1.0).total_cmp(&a.rhat.unwrap_or(1.0)));
    for d in diag.iter().take(6) {
        println!("  {:<22} mean {:>9.4} sd {:.4} R-hat {:.3} ESS {:.0}", d.name, d.mean, d.sd, d.rhat.unwrap_or(1.0), d.ess.unwrap_or(0.0));
    }
    let rec = recovery(&truth, &store.merged(), 0.9);
    println!(
        "inside 90% bands: s_alpha {:.2}, s_beta {:.2}, s_gamma {:.2}, kappa {:.2}",
        rec.s_alpha, rec.s_beta, rec.s_gamma, rec.kappa
    );
    Ok(())
}
