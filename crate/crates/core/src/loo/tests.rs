use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn gpd_sample(k: f64, sigma: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            sigma * ((-k * (1.0 - u).ln()).exp() - 1.0) / k
        })
        .collect()
}

#[test]
fn gpd_shape_recovered() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gpd_sample(0.3, 1.0, 1000, &mut rng);
        let fit = gpd_fit(&x).unwrap();
        assert!((fit.k - 0.3).abs() < 0.1, "seed {seed}: {}", fit.k);
        assert!((fit.sigma - 1.0).abs() < 0.2);
    }
}

#[test]
fn exponential_tail_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..1000).map(|_| Exp1.sample(&mut rng)).collect();
    let fit = gpd_fit(&x).unwrap();
    assert!(fit.k.abs() < 0.1, "{}", fit.k);
}

#[test]
fn short_and_degenerate_tails() {
    assert!(matches!(gpd_fit(&[1.0, 2.0, 3.0, 4.0]), Err(LooError::ShortTail(4))));
    let fit = gpd_fit(&[0.5; 20]).unwrap();
    assert!(fit.degenerate && fit.k >= DEGENERATE_K);
}

#[test]
fn tail_sizes() {
    assert_eq!(tail_length(4000), 190);
    assert_eq!(tail_length(100), 20);
    assert_eq!(tail_length(1000), 95);
}

#[test]
fn constant_loglik_gives_constant_elpd() {
    let ll = vec![vec![-1.25, -3.5]; 400];
    let r = psis_loo(&ll).unwrap();
    assert_eq!(r.elpd_pointwise, vec![-1.25, -3.5]);
    assert_eq!(r.elpd_total, -4.75);
    assert_eq!(r.degenerate, vec![0, 1]);
    assert_eq!(r.n_high_k, 0);
    assert!(r.pareto_k.iter().all(|k| k.is_finite()));
}

#[test]
fn smoothing_preserves_order_and_caps() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw: Vec<f64> = (0..1000).map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let (lw, _) = psis_smooth(&raw).unwrap();
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    for w in idx.windows(2) {
        assert!(lw[w[1]] >= lw[w[0]]);
    }
    assert!(lw.iter().all(|&v| v <= 0.0));
    // the body below the tail is only shifted
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let body = idx[..1000 - tail_length(1000)].iter();
    for &i in body {
        assert!((lw[i] - (raw[i] - max)).abs() < 1e-12);
    }
}

#[test]
fn shift_moves_elpd_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ll: Vec<Vec<f64>> = (0..500)
        .map(|_| (0..3).map(|_| -1.0 - 0.3 * rng.random::<f64>()).collect())
        .collect();
    let base = psis_loo(&ll).unwrap();
    let shifted: Vec<Vec<f64>> = ll.iter().map(|r| vec![r[0], r[1] + 2.5, r[2]]).collect();
    let moved = psis_loo(&shifted).unwrap();
    assert!((moved.elpd_pointwise[1] - base.elpd_pointwise[1] - 2.5).abs() < 1e-12);
    assert_eq!(moved.elpd_pointwise[0], base.elpd_pointwise[0]);
    assert_eq!(moved.pareto_k, base.pareto_k);
}

#[test]
fn normal_mean_matches_analytic_loo() {
    // y ~ N(μ, 1) with a flat prior: μ | y ~ N(ȳ, 1/n) and the left-out
    // predictive is N(ȳ₋ᵢ, 1 + 1/(n−1))
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let norm_lpdf = |x: f64, m: f64, v: f64| -0.5 * ((x - m).powi(2) / v + (2.0 * std::f64::consts::PI * v).ln());
    let ll: Vec<Vec<f64>> = (0..4000)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mu = ybar + z / n.sqrt();
            y.iter().map(|&yi| norm_lpdf(yi, mu, 1.0)).collect()
        })
        .collect();
    let r = psis_loo(&ll).unwrap();
    for (i, &yi) in y.iter().enumerate() {
        let m = (ybar * n - yi) / (n - 1.0);
        let exact = norm_lpdf(yi, m, 1.0 + 1.0 / (n - 1.0));
        assert!((r.elpd_pointwise[i] - exact).abs() < 0.02, "{i}");
        assert!(r.pareto_k[i] < HIGH_K);
    }
    assert!((r.looic() + 2.0 * r.elpd_total).abs() < 1e-12);
}

#[test]
fn nonfinite_cells_are_excluded() {
    let mut ll = vec![vec![-1.0, -2.0, -3.0]; 100];
    ll[7][1] = f64::NEG_INFINITY;
    let r = psis_loo(&ll).unwrap();
    assert_eq!(r.excluded, vec![1]);
    assert_eq!(r.cells, vec![0, 2]);
    assert_eq!(r.elpd_total, -4.0);
}

fn objective(lpd: &[Vec<f64>], w: &[f64]) -> f64 {
    (0..lpd[0].len())
        .map(|i| (0..w.len()).map(|k| w[k] * lpd[k][i].exp()).sum::<f64>().ln())
        .sum()
}

#[test]
fn single_model_weight_is_one() {
    let s = stack_weights(&[vec![-1.0, -2.0]]).unwrap();
    assert_eq!(s.weights, vec![1.0]);
    assert!(s.converged);
}

#[test]
fn dominance_gives_corner() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let a: Vec<f64> = (0..50).map(|_| -1.0 - rng.random::<f64>()).collect();
    let b: Vec<f64> = a.iter().map(|v| v - 0.3 - 0.5 * rng.random::<f64>()).collect();
    let s = stack_weights(&[a, b]).unwrap();
    assert!(s.weights[0] >= 0.999, "{:?}", s.weights);
    assert!(s.trace.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn two_models_match_grid_search() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let lpd: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..40).map(|_| -3.0 * rng.random::<f64>()).collect())
            .collect();
        let s = stack_weights(&lpd).unwrap();
        assert!(s.converged);
        assert!(s.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let best = (0..=10_000)
            .map(|g| g as f64 * 1e-4)
            .max_by(|a, b| objective(&lpd, &[*a, 1.0 - a]).total_cmp(&objective(&lpd, &[*b, 1.0 - b])))
            .unwrap();
        assert!((s.weights[0] - best).abs() < 1e-3, "seed {seed}: {} vs {best}", s.weights[0]);
    }
}

#[test]
fn cell_scaling_leaves_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lpd: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..30).map(|_| -2.0 * rng.random::<f64>()).collect())
        .collect();
    let mut scaled = lpd.clone();
    for row in scaled.iter_mut() {
        row[4] += 7.0;
        row[11] -= 40.0;
    }
    let a = stack_weights(&lpd).unwrap();
    let b = stack_weights(&scaled).unwrap();
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn stratified_allocation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = stacked_draws(&[4000, 4000], &[0.5, 0.5], 4000, StackMode::Stratified, &mut rng).unwrap();
    assert_eq!(d.iter().filter(|r| r.source == 0).count(), 2000);
    let d = stacked_draws(&[4000, 10, 4000], &[1.0, 0.0, 0.0], 4000, StackMode::Stratified, &mut rng).unwrap();
    assert!(d.iter().all(|r| r.source == 0));
    let mut idx: Vec<usize> = d.iter().map(|r| r.index).collect();
    idx.dedup();
    assert_eq!(idx.len(), 4000);
    // remainders go to the largest fractional parts
    let d = stacked_draws(&[10, 10, 10], &[0.45, 0.35, 0.2], 10, StackMode::Stratified, &mut rng).unwrap();
    let counts: Vec<usize> = (0..3).map(|k| d.iter().filter(|r| r.source == k).count()).collect();
    assert_eq!(counts, vec![5, 3, 2]);
    assert!(stacked_draws(&[4000, 0], &[0.9, 0.1], 100, StackMode::Stratified, &mut rng).is_err());
    assert!(stacked_draws(&[4000, 10], &[0.5, 0.5], 100, StackMode::Stratified, &mut rng).is_err());
}

#[test]
fn multinomial_counts_and_mixture_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = stacked_draws(&[4000, 4000], &[0.5, 0.5], 4000, StackMode::Multinomial, &mut rng).unwrap();
    let c0 = d.iter().filter(|r| r.source == 0).count() as f64;
    assert!((c0 - 2000.0).abs() < 4.0 * 1000f64.sqrt());

    // two normal "models": the stacked sample's CDF matches the mixture CDF
    let model: [Vec<f64>; 2] = [
        (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect(),
        (0..4000).map(|_| 3.0 + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect(),
    ];
    let w = [0.3, 0.7];
    let pool: Vec<f64> = stacked_draws(&[4000, 4000], &w, 4000, StackMode::Stratified, &mut rng)
        .unwrap()
        .iter()
        .map(|r| model[r.source][r.index])
        .collect();
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    for x in [-1.0, 0.0, 1.0, 2.5, 3.0, 4.0] {
        let mix = w[0] * cdf(&model[0], x) + w[1] * cdf(&model[1], x);
        assert!((cdf(&pool, x) - mix).abs() < 0.02, "{x}");
    }
}

#[test]
fn comparison_table() {
    let mk = |pw: Vec<f64>| LooResult {
        elpd_total: pw.iter().sum(),
        pareto_k: vec![0.1; pw.len()],
        elpd_pointwise: pw,
        n_high_k: 0,
        cells: vec![0, 1, 2],
        excluded: vec![],
        degenerate: vec![],
    };
    let a = mk(vec![-1.0, -2.0, -1.5]);
    let b = mk(vec![-1.2, -2.1, -1.4]);
    let rows = compare(&["80".into(), "81".into()], &[b, a], Some(&[0.2, 0.8])).unwrap();
    assert_eq!(rows[0].model, "81");
    assert_eq!(rows[0].elpd_diff, 0.0);
    assert_eq!(rows[0].se_diff, 0.0);
    assert!(rows[1].elpd_diff < 0.0 && rows[1].se_diff > 0.0);
    assert_eq!(rows[1].weight, Some(0.2));
}
