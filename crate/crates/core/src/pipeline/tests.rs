use super::*;
use crate::synthetic::SyntheticConfig;

fn synthetic_config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        synthetic: Some(SyntheticConfig {
            x_old: 20,
            max_age: 30,
            n_fit_years: 10,
            n_holdback: 3,
            ..SyntheticConfig::default()
        }),
        menu: vec![20, 24],
        horizon: 5,
        output: out.to_path_buf(),
        chains: crate::sampler::ChainConfig {
            n_chains: 2,
            n_iterations: 200,
            thin: 1,
            ..Default::default()
        },
        stacked_draws: 100,
        ..RunConfig::default()
    }
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path());
    cfg.holdback_from = Some(2000);
    cfg.fit_years = Some((1990, 1999));
    let text = cfg.to_toml().unwrap();
    let back = RunConfig::from_toml(&text, None).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_toml().unwrap(), text);
}

#[test]
fn unknown_key_lists_valid_keys() {
    let err = RunConfig::from_toml("menu = [85]\nhorizn = 3\n", None).unwrap_err().to_string();
    assert!(err.contains("horizn"), "{err}");
    assert!(err.contains("horizon") && err.contains("menu"), "{err}");
}

#[test]
fn relative_paths_resolve_against_config_dir() {
    let text = "output = \"out\"\n[data]\ndeaths = \"d.txt\"\nexposures = \"/abs/e.txt\"\n";
    let cfg = RunConfig::from_toml(text, Some(std::path::Path::new("/runs/a"))).unwrap();
    let d = cfg.data.as_ref().unwrap();
    assert_eq!(d.deaths, std::path::PathBuf::from("/runs/a/d.txt"));
    assert_eq!(d.exposures, std::path::PathBuf::from("/abs/e.txt"));
    assert_eq!(cfg.output, std::path::PathBuf::from("/runs/a/out"));
    assert_eq!((d.max_age, d.sex), (100, crate::ingest::Sex::Female));
}

#[test]
fn validation_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = synthetic_config(dir.path());
    good.validate().unwrap();
    let cases: Vec<(&str, Box<dyn Fn(&mut RunConfig)>)> = vec![
        ("menu", Box::new(|c| c.menu.clear())),
        ("increasing", Box::new(|c| c.menu = vec![90, 85])),
        ("horizon", Box::new(|c| c.horizon = 0)),
        ("mutually exclusive", Box::new(|c| {
            c.data = Some(DataConfig {
                deaths: "d".into(),
                exposures: "e".into(),
                sex: crate::ingest::Sex::Male,
                max_age: 100,
                exclude_oldest_cohorts: 0,
            })
        })),
        ("required", Box::new(|c| c.synthetic = None)),
        ("holdback_from", Box::new(|c| {
            c.fit_years = Some((1990, 1999));
            c.holdback_from = Some(1995);
        })),
        ("fan_levels", Box::new(|c| c.fan_levels = vec![0.5, 1.0])),
        ("coverage_level", Box::new(|c| c.coverage_level = 0.0)),
        ("stacked_draws", Box::new(|c| c.stacked_draws = 0)),
        ("chain", Box::new(|c| c.chains.n_chains = 0)),
    ];
    for (needle, edit) in cases {
        let mut c = good.clone();
        edit(&mut c);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains(needle), "{needle}: {err}");
    }
}

#[test]
fn year_plan_resolution() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = synthetic_config(dir.path());
    // simulated hold-back years are scored by default
    let p = YearPlan::resolve(&cfg, (1990, 2002)).unwrap();
    assert_eq!(p.fit, (1990, 1999));
    assert_eq!(p.holdback, Some((2000, 2002)));
    assert_eq!(p.forecast_years(5).last(), Some(&2004));

    cfg.holdback_from = Some(1998);
    let p = YearPlan::resolve(&cfg, (1990, 2002)).unwrap();
    assert_eq!((p.fit, p.holdback), ((1990, 1997), Some((1998, 2002))));

    cfg.horizon = 4;
    assert!(YearPlan::resolve(&cfg, (1990, 2002)).unwrap_err().to_string().contains("horizon"));

    cfg.holdback_from = None;
    cfg.fit_years = Some((1985, 1999));
    assert!(YearPlan::resolve(&cfg, (1990, 2002)).is_err());
    cfg.fit_years = Some((1990, 1999));
    assert_eq!(YearPlan::resolve(&cfg, (1990, 2002)).unwrap().holdback, None);
    cfg.holdback_from = Some(2010);
    assert!(YearPlan::resolve(&cfg, (1990, 2002)).is_err());
}

#[test]
fn stage_names() {
    for s in Stage::ALL {
        assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
    }
    assert!("plot".parse::<Stage>().is_err());
}

#[test]
fn later_stage_needs_earlier_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(synthetic_config(dir.path()), false).unwrap();
    let err = p.run_stage(Stage::Fit).unwrap_err();
    assert!(matches!(err, PipelineError::Missing { stage_needed: Stage::Ingest, .. }), "{err}");
}

#[test]
fn unwritable_output_is_reported_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, b"x").unwrap();
    let cfg = synthetic_config(&file.join("sub"));
    assert!(matches!(Pipeline::new(cfg, false), Err(PipelineError::Output { .. })));
}

#[test]
fn dependency_versions_are_recorded() {
    let v = dependency_versions();
    assert!(v.contains_key("nalgebra") && v.contains_key("rand_chacha"), "{v:?}");
}
