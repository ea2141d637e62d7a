//! End-to-end runs on a small simulated HMD extract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mortcast::model::SexMode;
use mortcast::pipeline::{Manifest, Pipeline, RunConfig, Stage, StackingTable};
use mortcast::synthetic::{generate, to_hmd_tables, SyntheticConfig};

/// Writes simulated joint HMD files (1990-2002) into `dir`.
fn write_hmd(dir: &Path) {
    let truth = generate(&SyntheticConfig {
        sex_mode: SexMode::Joint,
        x_old: 20,
        max_age: 30,
        n_fit_years: 10,
        n_holdback: 3,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let (d, e) = to_hmd_tables(&truth.datasets);
    fs::write(dir.join("Deaths_1x1.txt"), d.to_hmd_string(2)).unwrap();
    fs::write(dir.join("Exposures_1x1.txt"), e.to_hmd_string(2)).unwrap();
}

fn config(data: &Path, out: &Path, extra: &str) -> RunConfig {
    let text = format!(
        r#"
menu = [20, 24]
horizon = 5
output = "{}"
stacked_draws = 150
{extra}

[data]
deaths = "Deaths_1x1.txt"
exposures = "Exposures_1x1.txt"
max_age = 30

[chains]
n_chains = 2
n_iterations = 250
thin = 1
"#,
        out.display()
    );
    RunConfig::from_toml(&text, Some(data)).unwrap()
}

/// Every file under `dir` keyed by its relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Manifest with wall times zeroed.
fn timeless(mut m: Manifest) -> Manifest {
    for s in m.stages.values_mut() {
        s.wall_seconds = 0.0;
    }
    for f in m.fits.values_mut() {
        f.wall_seconds = 0.0;
    }
    m
}

#[test]
fn hmd_run_emits_every_artifact_and_is_deterministic() {
    let data = tempfile::tempdir().unwrap();
    write_hmd(data.path());
    let runs: Vec<PathBuf> = ["a", "b"].iter().map(|r| data.path().join(r)).collect();
    for out in &runs {
        let mut p = Pipeline::new(config(data.path(), out, "holdback_from = 2000"), false).unwrap();
        p.run_all().unwrap();
    }
    let out = &runs[0];
    for f in [
        "audit.json",
        "data/female.csv",
        "fits/x20/draws.json",
        "fits/x24/diagnostics.csv",
        "fits/x24/components.csv",
        "loo/x20.json",
        "loo/pareto_k.csv",
        "weights.csv",
        "stacking.json",
        "forecast/fan_log_m.csv",
        "forecast/fan_q.csv",
        "forecast/fan_e0.csv",
        "forecast/e0_draws.csv",
        "assess/coverage.json",
        "assess/coverage_by_year.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }

    let m = manifest(out);
    assert!(Stage::ALL.iter().all(|&s| m.completed(s)));
    assert_eq!(m.years.unwrap().fit, (1990, 1999));
    assert_eq!(m.years.unwrap().holdback, Some((2000, 2002)));
    assert_eq!(m.fits.len(), 2);
    assert!(m.dependencies.contains_key("nalgebra"));

    let table: StackingTable = serde_json::from_slice(&fs::read(out.join("stacking.json")).unwrap()).unwrap();
    assert!((table.weights.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    let mut w = csv::Reader::from_path(out.join("weights.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = w.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2);
    let total: f64 = rows.iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    let mut fan = csv::Reader::from_path(out.join("forecast/fan_log_m.csv")).unwrap();
    let levels: std::collections::BTreeSet<String> = fan.records().map(|r| r.unwrap()[3].to_string()).collect();
    let want: std::collections::BTreeSet<String> =
        ["0.02", "0.1", "0.2", "0.3", "0.4", "0.5", "0.6", "0.7", "0.8", "0.9"].iter().map(|s| s.to_string()).collect();
    assert_eq!(levels, want);

    // same config and seed, different directory: identical files apart from wall times
    let (mut a, mut b) = (snapshot(&runs[0]), snapshot(&runs[1]));
    assert_eq!(timeless(manifest(&runs[0])), timeless(manifest(&runs[1])));
    a.remove(Path::new("manifest.json"));
    b.remove(Path::new("manifest.json"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{} differs between runs", k.display());
    }
}

#[test]
fn resume_recomputes_only_missing_stages() {
    let data = tempfile::tempdir().unwrap();
    write_hmd(data.path());
    let out = data.path().join("run");
    let cfg = config(data.path(), &out, "holdback_from = 2000");
    Pipeline::new(cfg.clone(), false).unwrap().run_all().unwrap();
    let before = snapshot(&out);
    let fits_before = manifest(&out).fits;

    fs::remove_dir_all(out.join("forecast")).unwrap();
    Pipeline::new(cfg.clone(), true).unwrap().run_all().unwrap();
    let after = snapshot(&out);
    // the draws were not refitted: fit records, wall times included, are untouched
    assert_eq!(manifest(&out).fits, fits_before);
    for (k, v) in &before {
        if k != Path::new("manifest.json") {
            assert!(after.get(k) == Some(v), "{} changed on resume", k.display());
        }
    }

    // a different config cannot resume into the same directory
    let mut other = cfg;
    other.seed += 1;
    assert!(Pipeline::new(other, true).is_err());
}

#[test]
fn menu_of_one_without_holdback() {
    let data = tempfile::tempdir().unwrap();
    write_hmd(data.path());
    let out = data.path().join("run");
    let mut cfg = config(data.path(), &out, "fit_years = [1990, 2002]");
    cfg.menu = vec![22];
    Pipeline::new(cfg, false).unwrap().run_all().unwrap();
    let table: StackingTable = serde_json::from_slice(&fs::read(out.join("stacking.json")).unwrap()).unwrap();
    assert_eq!(table.weights.weights, vec![1.0]);
    assert_eq!(table.weights.iterations, 0);
    assert!(!out.join("assess").exists());
    assert!(manifest(&out).completed(Stage::Assess));
}

#[test]
fn binary_runs_stages_and_reports_errors() {
    let data = tempfile::tempdir().unwrap();
    write_hmd(data.path());
    let toml = config(data.path(), &data.path().join("ignored"), "").to_toml().unwrap();
    let cfg_path = data.path().join("run.toml");
    fs::write(&cfg_path, toml).unwrap();
    let bin = env!("CARGO_BIN_EXE_mortcast");
    let out = data.path().join("cli");
    let run = |args: &[&str]| {
        Command::new(bin)
            .args(args)
            .args(["--config", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(["--menu", "20", "--seed", "5"])
            .output()
            .unwrap()
    };

    let early = run(&["forecast"]);
    assert!(!early.status.success());
    let msg = String::from_utf8_lossy(&early.stderr);
    assert!(msg.contains("forecast") && msg.contains("stack"), "{msg}");

    for verb in ["ingest", "fit", "loo", "stack", "forecast", "assess"] {
        let o = run(&[verb, "--holdback-from", "2001"]);
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let m = manifest(&out);
    assert_eq!(m.seeds.chains, 5);
    assert_eq!(m.config.menu, vec![20]);
    assert_eq!(m.years.unwrap().holdback, Some((2001, 2002)));
    assert!(out.join("assess/coverage.json").exists());

    let resumed = run(&["run", "--holdback-from", "2001", "--resume"]);
    assert!(resumed.status.success());
    assert!(String::from_utf8_lossy(&resumed.stderr).contains("skipping"));

    let bad = Command::new(bin)
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--menu", "24,20"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("strictly increasing"));
}
