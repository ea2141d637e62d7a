//! The whole run driven by a TOML config, as the `mortcast` binary does it:
//! ingest HMD files, fit a menu of transition ages, LOO, stack, forecast and
//! score the held-back years.
//!
//! cargo run --release --example full_pipeline -- [output_dir]
//!
//! Simulated HMD files stand in for downloaded ones. Chains are kept short so
//! the example finishes in a few minutes; real runs use the defaults.

use mortcast::model::SexMode;
use mortcast::pipeline::{Pipeline, RunConfig, StackingTable};
use mortcast::synthetic::{generate, to_hmd_tables, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args().nth(1).unwrap_or_else(|| "mortcast-example-out".into());
    std::fs::create_dir_all(&out)?;

    let truth = generate(&SyntheticConfig {
        sex_mode: SexMode::Joint,
        x_old: 40,
        max_age: 50,
        n_fit_years: 15,
        n_holdback: 5,
        ..SyntheticConfig::default()
    })?;
    let (deaths, exposures) = to_hmd_tables(&truth.datasets);
    std::fs::write(format!("{out}/Deaths_1x1.txt"), deaths.to_hmd_string(2))?;
    std::fs::write(format!("{out}/Exposures_1x1.txt"), exposures.to_hmd_string(2))?;

    let toml = format!(
        r#"
menu = [36, 40, 44]
horizon = 20
holdback_from = {holdback}
output = "run"
stacked_draws = 1000

[data]
deaths = "Deaths_1x1.txt"
exposures = "Exposures_1x1.txt"
sex = "female"
max_age = 50

[chains]
n_iterations = 500
thin = 1
target_acceptance = 0.9
"#,
        holdback = truth.config.last_fit_year() + 1
    );
    std::fs::write(format!("{out}/run.toml"), &toml)?;
    let cfg = RunConfig::load(std::path::Path::new(&format!("{out}/run.toml")))?;

    let mut pipeline = Pipeline::new(cfg, true)?;
    pipeline.run_all()?;

    let table: StackingTable = serde_json::from_str(&std::fs::read_to_string(pipeline.out().join("stacking.json"))?)?;
    println!("{:>5} {:>10} {:>7} {:>7} {:>6}", "x_old", "elpd", "se", "weight", "R-hat");
    for r in &table.rows {
        println!(
            "{:>5} {:>10.1} {:>7.1} {:>7.3} {:>6.3}",
            r.x_old,
            r.loo.elpd,
            r.loo.se,
            table.weight_of(r.x_old).unwrap_or(0.0),
            r.rhat_max.unwrap_or(f64::NAN)
        );
    }
    let cov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(pipeline.out().join("assess/coverage.json"))?)?;
    println!("hold-back coverage at 90%: {:.3}", cov["coverage"].as_f64().unwrap_or(f64::NAN));
    println!("artifacts in {}", pipeline.out().display());
    Ok(())
}
