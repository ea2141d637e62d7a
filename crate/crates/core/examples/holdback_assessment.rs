//! Fits the early years of a simulated series, forecasts the held-back years
//! and scores observed log rates against the posterior predictive intervals.
//!
//! cargo run --release --example holdback_assessment -- [iterations] [level]

use mortcast::forecast::{all_draws, holdback_coverage, predict_log_rates, ModelDraws};
use mortcast::model::MortalityModel;
use mortcast::sampler::{run_chains, ChainConfig, InitStrategy};
use mortcast::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(600);
    let level: f64 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0.9);

    let truth = generate(&SyntheticConfig {
        n_fit_years: 15,
        n_holdback: 5,
        ..SyntheticConfig::default()
    })?;
    let model = MortalityModel::new(truth.model.spec.clone(), &truth.fit_datasets())?;
    let config = ChainConfig {
        n_iterations: iterations,
        thin: 1,
        target_acceptance: 0.9,
        ..ChainConfig::default()
    };
    let store = run_chains(&model, model.parameter_names(), &InitStrategy::default(), &config)?;
    let draws = store.merged();

    let first = truth.config.last_fit_year() + 1;
    let years: Vec<i32> = (first..=truth.config.last_year()).collect();
    let observed: Vec<_> = truth
        .datasets
        .iter()
        .map(|d| d.restrict_years(first..=truth.config.last_year()))
        .collect::<Result<_, _>>()?;
    let sources = [ModelDraws { model: &model, draws: &draws }];
    let surface = predict_log_rates(&sources, &all_draws(0, draws.len()), &years, 1)?;
    let predictive = surface.predictive(|s, a, y| observed[s].exposure_at(a, y), 2);
    let report = holdback_coverage(&predictive, &observed, level, 10)?;

    println!(
        "{}/{} held-back cells inside the central {:.0}% interval ({:.3})",
        report.n_inside,
        report.n_cells,
        100.0 * level,
        report.coverage
    );
    for c in report.by_year.iter().chain(&report.by_age_band) {
        println!("  {:<6} {:>3}/{:<3} {:.2}", c.group, c.inside, c.n, c.fraction);
    }
    Ok(())
}
