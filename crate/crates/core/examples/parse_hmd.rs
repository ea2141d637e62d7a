//! Reads an HMD deaths/exposures pair, aligns one sex onto the model grid and
//! prints an audit summary.
//!
//! cargo run --example parse_hmd -- [Deaths_1x1.txt Exposures_1x1.txt [sex]]
//!
//! Without arguments a simulated pair is written to a temporary directory
//! first, so the example runs offline.

use std::path::PathBuf;

use mortcast::ingest::{align_dataset, read_hmd_file, Sex};
use mortcast::model::SexMode;
use mortcast::synthetic::{generate, to_hmd_tables, SyntheticConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = tempfile::tempdir()?;
    let (deaths_path, exposures_path) = if args.len() >= 2 {
        (PathBuf::from(&args[0]), PathBuf::from(&args[1]))
    } else {
        let truth = generate(&SyntheticConfig {
            sex_mode: SexMode::Joint,
            ..SyntheticConfig::default()
        })?;
        let (d, e) = to_hmd_tables(&truth.datasets);
        let paths = (tmp.path().join("Deaths_1x1.txt"), tmp.path().join("Exposures_1x1.txt"));
        std::fs::write(&paths.0, d.to_hmd_string(2))?;
        std::fs::write(&paths.1, e.to_hmd_string(2))?;
        paths
    };
    let sex: Sex = args.get(2).map_or(Ok(Sex::Female), |s| s.parse())?;

    let deaths = read_hmd_file(&deaths_path)?;
    let exposures = read_hmd_file(&exposures_path)?;
    println!("header: {:?}", deaths.header.first());
    println!("years {:?}, ages 0-{}", deaths.years(), deaths.max_age);

    let mut ds = align_dataset(&deaths, &exposures, sex, deaths.years())?;
    let before = ds.n_included();
    ds.exclude_oldest_cohorts(5)?;
    println!(
        "{sex}: {} cells, {before} usable, {} after dropping the 5 oldest cohorts",
        ds.deaths.len(),
        ds.n_included()
    );
    println!("cohorts {:?}, included {:?}", ds.cohort_range(), ds.included_cohort_range());

    let mut audit = Vec::new();
    ds.write_audit_csv(&mut audit)?;
    for line in String::from_utf8(audit)?.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
