use super::*;

fn std_normal(dim: usize) -> FnDensity<impl Fn(&[f64], &mut [f64]) -> f64 + Sync> {
    FnDensity {
        dim,
        f: |x: &[f64], g: &mut [f64]| {
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi = -xi;
            }
            -0.5 * x.iter().map(|v| v * v).sum::<f64>()
        },
    }
}

fn config(n_iterations: usize, thin: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        n_iterations,
        thin,
        seed,
        ..ChainConfig::default()
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[test]
fn defaults_follow_the_protocol() {
    let c = ChainConfig::default();
    assert_eq!((c.n_chains, c.n_iterations, c.thin), (4, 8000, 4));
    assert_eq!(c.n_warmup(), 4000);
    assert_eq!(c.retained_total(), 4000);
    assert!(c.validate().is_ok());
    assert!(config(300, 1, 0).validate().is_ok());
    assert!(config(150, 1, 0).validate().is_err());
    assert!(config(2000, 3, 0).validate().is_err());
}

#[test]
fn two_dimensional_standard_normal() {
    let store = run_chains(&std_normal(2), &default_names(2), &InitStrategy::default(), &config(2000, 1, 11)).unwrap();
    assert_eq!(store.total_draws(), 4000);
    let draws = store.merged();
    let n = draws.len() as f64;
    let mean: Vec<f64> = (0..2).map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / n).collect();
    for &m in &mean {
        assert!(m.abs() < 0.05, "{mean:?}");
    }
    for i in 0..2 {
        for j in 0..2 {
            let c = draws.iter().map(|d| (d[i] - mean[i]) * (d[j] - mean[j])).sum::<f64>() / (n - 1.0);
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((c - target).abs() < 0.1, "cov[{i}][{j}] = {c}");
        }
    }
    assert_eq!(store.report().divergent.iter().sum::<usize>(), 0);
}

#[test]
fn normal_quantiles() {
    let (mu, sd) = (3.0, 2.0);
    let target = FnDensity {
        dim: 1,
        f: move |x: &[f64], g: &mut [f64]| {
            g[0] = -(x[0] - mu) / (sd * sd);
            -0.5 * ((x[0] - mu) / sd).powi(2)
        },
    };
    let store = run_chains(&target, &default_names(1), &InitStrategy::default(), &config(12000, 1, 5)).unwrap();
    let mut xs: Vec<f64> = store.merged().iter().map(|d| d[0]).collect();
    xs.sort_by(f64::total_cmp);
    let z95 = 1.6448536269514722;
    for (p, exact) in [(0.05, mu - z95 * sd), (0.5, mu), (0.95, mu + z95 * sd)] {
        let q = quantile(&xs, p);
        assert!((q - exact).abs() < 0.1, "q{p}: {q} vs {exact}");
    }
}

#[test]
fn seeding_is_reproducible() {
    let m = std_normal(3);
    let a = run_chains(&m, &default_names(3), &InitStrategy::default(), &config(400, 2, 7)).unwrap();
    let b = run_chains(&m, &default_names(3), &InitStrategy::default(), &config(400, 2, 7)).unwrap();
    assert_eq!(a, b);
    let c = run_chains(&m, &default_names(3), &InitStrategy::default(), &config(400, 2, 8)).unwrap();
    assert_ne!(a.chains[0].draws, c.chains[0].draws);
}

#[test]
fn adaptation_is_frozen_after_warmup() {
    let store = run_chains(&std_normal(4), &default_names(4), &InitStrategy::default(), &config(1000, 1, 3)).unwrap();
    for ch in &store.chains {
        assert!(ch.stats.iter().all(|s| s.step_size == ch.step_size));
        assert!(ch.inv_metric.iter().all(|v| v.is_finite() && *v > 0.0));
        // the energy error stays bounded across the sampling phase
        let half = ch.stats.len() / 2;
        let mean_acc = |s: &[TransitionStats]| s.iter().map(|t| t.accept_stat).sum::<f64>() / s.len() as f64;
        let (a, b) = (mean_acc(&ch.stats[..half]), mean_acc(&ch.stats[half..]));
        assert!(a > 0.6 && b > 0.6 && (a - b).abs() < 0.1, "{a} {b}");
    }
}

#[test]
fn correlated_gaussian_converges_at_the_monte_carlo_rate() {
    // Σ_ij = 0.5^|i−j|, precision via dense inverse.
    let dim = 10;
    let cov = nalgebra::DMatrix::from_fn(dim, dim, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
    let prec = cov.clone().try_inverse().unwrap();
    let target = FnDensity {
        dim,
        f: move |x: &[f64], g: &mut [f64]| {
            let v = nalgebra::DVector::from_column_slice(x);
            let px = &prec * &v;
            for i in 0..x.len() {
                g[i] = -px[i];
            }
            -0.5 * v.dot(&px)
        },
    };
    let names = default_names(dim);
    let err = |n_iter: usize, seed: u64| {
        let s = run_chains(&target, &names, &InitStrategy::default(), &config(n_iter, 1, seed)).unwrap();
        let d = s.merged();
        let n = d.len() as f64;
        (0..dim)
            .map(|j| {
                let m = d.iter().map(|r| r[j]).sum::<f64>() / n;
                let v = d.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
                m * m + (v - 1.0).powi(2)
            })
            .sum::<f64>()
    };
    // mean squared error should drop about 4× when draws quadruple
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..10 {
        small += err(800, 100 + seed);
        large += err(3200, 200 + seed);
    }
    let ratio = small / large;
    assert!(ratio > 2.0 && ratio < 8.0, "error ratio {ratio}");
}

#[test]
fn thinning_and_merge_indexing() {
    let names = default_names(1);
    let cfg = ChainConfig {
        thin: 1,
        ..ChainConfig::default()
    };
    let draws: Vec<Vec<Vec<f64>>> = (0..4)
        .map(|c| (0..4000).map(|i| vec![(c * 10_000 + i) as f64]).collect())
        .collect();
    let store = DrawStore::from_draws(names, cfg, draws);
    let merged = thin_merge(&store, 4);
    assert_eq!(merged.len(), 4000);
    assert_eq!(thin_merge(&store, 1), store.merged());
    assert_eq!(store.merged().len(), 16000);
    for s in [0, 1, 999, 1000, 2500, 3999] {
        let (c, it) = merged_origin(&store, 4, s);
        assert_eq!(merged[s][0], (c * 10_000 + it) as f64);
    }
    assert_eq!(merged_origin(&store, 4, 1000), (1, 3));
}

#[test]
fn all_divergent_chain_is_an_error() {
    // flat inside a tiny box: trajectories never U-turn, so every one runs
    // into the wall and diverges
    let target = FnDensity {
        dim: 1,
        f: |x: &[f64], g: &mut [f64]| {
            g[0] = 0.0;
            if x[0].abs() < 1e-3 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        },
    };
    let r = run_chains(
        &target,
        &default_names(1),
        &InitStrategy::Fixed(vec![vec![0.0]]),
        &ChainConfig {
            warmup_fraction: 0.0,
            ..config(400, 1, 1)
        },
    );
    assert!(matches!(r, Err(SamplerError::AllDivergent { .. })), "{r:?}");
}

#[test]
fn store_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let store = run_chains(&std_normal(2), &default_names(2), &InitStrategy::default(), &config(400, 2, 9)).unwrap();
    store.write(dir.path(), "draws").unwrap();
    let back = DrawStore::read(dir.path(), "draws").unwrap();
    assert_eq!(back.names, store.names);
    assert_eq!(back.config, store.config);
    for (a, b) in back.chains.iter().zip(&store.chains) {
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.step_size, b.step_size);
    }
    let text = std::fs::read_to_string(dir.path().join("draws.json")).unwrap();
    assert!(text.contains("rhat_max"));
}
