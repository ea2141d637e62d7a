//! Joint female/male fit: shared old-age asymptote ψ and correlated period
//! innovations. Prints the posterior of ρ and ψ and the forecast sex gap.
//!
//! cargo run --release --example joint_sex -- [iterations]

use mortcast::forecast::{all_draws, predict_log_rates, summarize_fan, ModelDraws, QuantileRule};
use mortcast::model::{MortalityModel, SexMode};
use mortcast::sampler::{run_chains, ChainConfig, InitStrategy};
use mortcast::synthetic::{generate, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let iterations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(600);
    let truth = generate(&SyntheticConfig {
        sex_mode: SexMode::Joint,
        x_old: 30,
        max_age: 40,
        n_fit_years: 15,
        n_holdback: 10,
        rho: 0.8,
        ..SyntheticConfig::default()
    })?;
    let model = MortalityModel::new(truth.model.spec.clone(), &truth.fit_datasets())?;
    println!("{} parameters over {} cells", model.dim(), model.n_cells());
    let config = ChainConfig {
        n_iterations: iterations,
        thin: 1,
        target_acceptance: 0.9,
        ..ChainConfig::default()
    };
    let store = run_chains(&model, model.parameter_names(), &InitStrategy::default(), &config)?;
    println!("worst R-hat {:.3}", store.report().rhat_max.unwrap_or(f64::NAN));

    let draws = store.merged();
    let comps: Vec<_> = draws.iter().map(|d| model.components(d)).collect();
    let rule = QuantileRule::default();
    let rho: Vec<f64> = comps.iter().filter_map(|c| c.rho).collect();
    let psi: Vec<f64> = comps.iter().map(|c| c.log_psi.exp()).collect();
    for (name, v, t) in [("rho", &rho, truth.config.rho), ("psi", &psi, truth.config.log_psi.exp())] {
        let f = summarize_fan(v, &[0.9], rule);
        println!("{name}: median {:.3}, 90% [{:.3}, {:.3}], truth {t:.3}", f.median, f.lower[0], f.upper[0]);
    }

    // male excess mortality at age 35 at the end of the horizon
    let sources = [ModelDraws { model: &model, draws: &draws }];
    let year = model.spec.years.1 + model.spec.horizon as i32;
    let surface = predict_log_rates(&sources, &all_draws(0, draws.len()), &[year], 3)?;
    let age = surface.ages.iter().position(|&a| a == 35).expect("age 35 on the grid");
    let gap: Vec<f64> = surface
        .cell(1, age, 0)
        .iter()
        .zip(surface.cell(0, age, 0))
        .map(|(m, f)| m - f)
        .collect();
    let g = summarize_fan(&gap, &[0.9], rule);
    println!(
        "{year}: male minus female log m at 35 median {:.3}, 90% [{:.3}, {:.3}]",
        g.median, g.lower[0], g.upper[0]
    );
    Ok(())
}
