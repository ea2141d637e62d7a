//! Fits one model to simulated data, extends κ and the cohort effects by
//! random walks, and prints fan bands for period life expectancy.
//!
//! cargo run --release --example forecast_life_expectancy -- [iterations] [horizon]

use mortcast::forecast::{all_draws, e0_draws, predict_log_rates, summarize_fan, ModelDraws, QuantileRule};
use mortcast::model::{ModelSpec, MortalityModel};
use mortcast::sampler::{run_chains, ChainConfig, InitStrategy};
use mortcast::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(600);
    let horizon: u32 = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(30);

    // ages to 100 so the open interval at the top carries little of e0
    let truth = generate(&SyntheticConfig {
        x_old: 80,
        max_age: 100,
        ..SyntheticConfig::default()
    })?;
    let data = truth.fit_datasets();
    let spec = ModelSpec::for_dataset(&data[0], truth.config.x_old, horizon, truth.config.sex_mode);
    let model = MortalityModel::new(spec, &data)?;
    let config = ChainConfig {
        n_iterations: iterations,
        thin: 1,
        target_acceptance: 0.9,
        ..ChainConfig::default()
    };
    let store = run_chains(&model, model.parameter_names(), &InitStrategy::default(), &config)?;
    let report = store.report();
    println!(
        "{} draws, worst R-hat {:.3}, divergences {:.2}%",
        store.total_draws(),
        report.rhat_max.unwrap_or(f64::NAN),
        100.0 * report.divergence_rate
    );

    let draws = store.merged();
    let sources = [ModelDraws { model: &model, draws: &draws }];
    let last = model.spec.years.1;
    let years: Vec<i32> = (0..=horizon as i32).step_by(5).map(|h| last + h).collect();
    let surface = predict_log_rates(&sources, &all_draws(0, draws.len()), &years, 5)?;
    let levels = [0.5, 0.8, 0.9];
    println!("{:>6} {:>8} {:>17} {:>17}", "year", "median", "50%", "90%");
    for (y, year) in years.iter().enumerate() {
        let fan = summarize_fan(&e0_draws(&surface, 0, y)?, &levels, QuantileRule::default());
        println!(
            "{year:>6} {:>8.2} [{:>6.2}, {:>6.2}] [{:>6.2}, {:>6.2}]",
            fan.median, fan.lower[0], fan.upper[0], fan.lower[2], fan.upper[2]
        );
    }
    Ok(())
}
