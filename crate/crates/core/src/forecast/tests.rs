use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::model::SexMode;
use crate::synthetic::{generate, SyntheticConfig};

fn small(mode: SexMode) -> crate::synthetic::SyntheticTruth {
    generate(&SyntheticConfig {
        sex_mode: mode,
        x_old: 20,
        max_age: 30,
        n_fit_years: 8,
        n_holdback: 5,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn var(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[test]
fn zero_innovation_keeps_kappa_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = extend_period(&[vec![0.1, -0.2, 0.3]], &[0.0], None, 4, &mut rng);
    assert_eq!(out[0], vec![0.1, -0.2, 0.3, 0.3, 0.3, 0.3, 0.3]);
}

#[test]
fn random_walk_variance_grows_linearly() {
    let sigma = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let reps: Vec<Vec<f64>> = (0..10_000)
        .map(|_| extend_period(&[vec![0.0, 0.4]], &[sigma], None, 6, &mut rng).remove(0))
        .collect();
    for h in [1, 3, 6] {
        let d: Vec<f64> = reps.iter().map(|k| k[1 + h] - k[1]).collect();
        let v = var(&d);
        let want = h as f64 * sigma * sigma;
        assert!((v / want - 1.0).abs() < 0.06, "h={h}: {v} vs {want}");
    }
}

#[test]
fn joint_innovations_are_correlated() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut f, mut m) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let k = extend_period(&[vec![0.0], vec![0.0]], &[0.02, 0.03], Some(0.95), 1, &mut rng);
        f.push(k[0][1]);
        m.push(k[1][1]);
    }
    let cov = f.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64;
    let r = cov / (var(&f) * var(&m)).sqrt();
    assert!((r - 0.95).abs() < 0.02, "{r}");
}

#[test]
fn cohort_extension() {
    let t = small(SexMode::Single);
    let m = &t.model;
    let coef = &t.model.components(&t.theta).sexes[0].cohort_coef;
    let n_new = m.n_cohort_total - coef.len();
    assert!(n_new > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let flat = extend_cohort(m, coef, n_new, 0.0, &mut rng).unwrap();
    assert_eq!(&flat[..coef.len()], &coef[..]);
    assert!(flat[coef.len()..].iter().all(|&v| v == *coef.last().unwrap()));
    // cohorts supported only by in-sample coefficients are unchanged
    let wild = extend_cohort(m, coef, n_new, 5.0, &mut rng).unwrap();
    for c in m.first_cohort..=m.last_cohort - 4 {
        assert_eq!(m.cohort_effect(&flat, c), m.cohort_effect(&wild, c));
    }
    assert!(matches!(
        extend_cohort(m, coef, n_new + 1, 0.1, &mut rng),
        Err(ForecastError::CohortCoverage { .. })
    ));
    let diffs: Vec<f64> = (0..4000)
        .flat_map(|_| {
            let e = extend_cohort(m, coef, n_new, 0.2, &mut rng).unwrap();
            (coef.len()..e.len()).map(move |j| e[j] - e[j - 1]).collect::<Vec<_>>()
        })
        .collect();
    assert!((var(&diffs) / 0.04 - 1.0).abs() < 0.05);
}

#[test]
fn zero_horizon_identity() {
    for mode in [SexMode::Single, SexMode::Joint] {
        let t = small(mode);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<Vec<f64>> = (0..6)
            .map(|_| t.theta.iter().map(|v| v + 0.05 * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let src = [ModelDraws {
            model: &t.model,
            draws: &draws,
        }];
        let years: Vec<i32> = (1990..=2002).collect();
        let surf = predict_log_rates(&src, &all_draws(0, draws.len()), &years, 9).unwrap();
        for (d, th) in draws.iter().enumerate() {
            for s in 0..t.model.sexes.len() {
                let field = t.model.rate_field(th, s);
                for a in 0..field.ages.len() {
                    for y in 0..field.years.len() {
                        assert_eq!(surf.get(d, s, a, y), field.get(a, y));
                    }
                }
            }
        }
        // a subset of years reproduces the same values
        let late = predict_log_rates(&src, &all_draws(0, draws.len()), &[2001, 2002], 9).unwrap();
        assert_eq!(late.get(3, 0, 10, 1), surf.get(3, 0, 10, 12));
        assert!(predict_log_rates(&src, &all_draws(0, 1), &[2003], 9).is_err());
    }
}

#[test]
fn alpha_only_state_is_flat_in_time() {
    let t = small(SexMode::Single);
    let lay = &t.model.layout;
    let mut th = vec![0.0; lay.dim()];
    let b = &lay.blocks[0];
    for j in b.beta_alpha.clone() {
        th[j] = -6.0 + 0.01 * j as f64;
    }
    // zero every time-varying term: scales to ~0 and the old-age time slopes
    // to ~0 as well
    th[b.log_sigma_gamma] = -60.0;
    th[lay.log_sigma_kappa[0]] = -60.0;
    th[b.old_raw[1]] = -60.0;
    th[b.old_raw[2]] = (1.0 / t.model.horizon_index()).ln();
    let draws = vec![th];
    let src = [ModelDraws {
        model: &t.model,
        draws: &draws,
    }];
    let years: Vec<i32> = (1990..=2002).collect();
    let surf = predict_log_rates(&src, &all_draws(0, 1), &years, 1).unwrap();
    for a in 0..surf.ages.len() {
        let v0 = surf.get(0, 0, a, 0);
        for y in 1..years.len() {
            assert!((surf.get(0, 0, a, y) - v0).abs() < 1e-12, "age {a} year {y}");
        }
    }
}

#[test]
fn single_source_stack_reproduces_model() {
    let t = small(SexMode::Single);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<Vec<f64>> = (0..40)
        .map(|_| t.theta.iter().map(|v| v + 0.02 * rng.random_range(-1.0..1.0)).collect())
        .collect();
    let other: Vec<Vec<f64>> = draws.iter().map(|d| d.iter().map(|v| v + 0.3).collect()).collect();
    let srcs = [
        ModelDraws {
            model: &t.model,
            draws: &other,
        },
        ModelDraws {
            model: &t.model,
            draws: &draws,
        },
    ];
    let years = [1995, 2000];
    let stacked = predict_log_rates(&srcs, &all_draws(1, 40), &years, 3).unwrap();
    let alone = predict_log_rates(&srcs[1..], &all_draws(0, 40), &years, 3).unwrap();
    assert_eq!(stacked.log_m, alone.log_m);
}

#[test]
fn predictive_noise_and_e0() {
    let t = small(SexMode::Single);
    let draws = vec![t.theta.clone(); 200];
    let src = [ModelDraws {
        model: &t.model,
        draws: &draws,
    }];
    let surf = predict_log_rates(&src, &all_draws(0, 200), &[1997], 1).unwrap();
    let pred = surf.predictive(|_, _, _| 5e4, 2);
    let cell = pred.cell(0, 30, 0);
    let spread = var(&cell.iter().copied().filter(|v| v.is_finite()).collect::<Vec<_>>());
    assert!(spread > 0.0);
    assert_eq!(pred, surf.predictive(|_, _, _| 5e4, 2));
    let e0 = e0_draws(&surf, 0, 0).unwrap();
    let m: Vec<f64> = surf.schedule(0, 0, 0).iter().map(|v| v.exp()).collect();
    let direct = lifetable::e0_from_rates(&m, Separation::default()).unwrap();
    assert!(e0.iter().all(|&e| e == direct && e > 0.0));
}
