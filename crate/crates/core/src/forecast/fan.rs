//! Central-interval fan summaries of draw samples.

use serde::{Deserialize, Serialize};

/// Central interval coverages used by the fan charts: 2%, then 10% to 90%.
pub const DEFAULT_LEVELS: [f64; 10] = [0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileRule {
    /// Smallest sample value whose empirical CDF reaches `p`. Quantiles of a
    /// pooled sample then always lie between the quantiles of its parts.
    #[default]
    InverseCdf,
    /// Linear interpolation between order statistics at `(n−1)p`.
    Interpolated,
}

/// Quantile of an ascending sample. `−∞` entries are allowed.
pub fn quantile(sorted: &[f64], p: f64, rule: QuantileRule) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    match rule {
        QuantileRule::InverseCdf => {
            let k = (p * n as f64).ceil() as usize;
            sorted[k.clamp(1, n) - 1]
        }
        QuantileRule::Interpolated => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let (a, b) = (sorted[lo], sorted[(lo + 1).min(n - 1)]);
            if frac == 0.0 || a == b || !a.is_finite() || !b.is_finite() {
                a
            } else {
                a + frac * (b - a)
            }
        }
    }
}

/// Median and central intervals at each level for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanBands {
    pub levels: Vec<f64>,
    pub median: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FanBands {
    pub fn interval(&self, level: f64) -> Option<(f64, f64)> {
        let i = self.levels.iter().position(|&l| (l - level).abs() < 1e-12)?;
        Some((self.lower[i], self.upper[i]))
    }
}

pub fn summarize_fan(draws: &[f64], levels: &[f64], rule: QuantileRule) -> FanBands {
    let mut s = draws.to_vec();
    s.sort_by(f64::total_cmp);
    FanBands {
        levels: levels.to_vec(),
        median: quantile(&s, 0.5, rule),
        lower: levels.iter().map(|l| quantile(&s, 0.5 - l / 2.0, rule)).collect(),
        upper: levels.iter().map(|l| quantile(&s, 0.5 + l / 2.0, rule)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ContinuousCDF, Normal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn normal_quantiles_match_z_values() {
        let x = normals(4000, 1);
        let z = Normal::new(0.0, 1.0).unwrap();
        for rule in [QuantileRule::InverseCdf, QuantileRule::Interpolated] {
            let f = summarize_fan(&x, &DEFAULT_LEVELS, rule);
            for (i, l) in DEFAULT_LEVELS.iter().enumerate() {
                let zq = z.inverse_cdf(0.5 + l / 2.0);
                assert!((f.upper[i] - zq).abs() < 0.05 && (f.lower[i] + zq).abs() < 0.05, "{l}");
            }
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            assert!((f.median - mean).abs() < 0.05);
        }
    }

    #[test]
    fn bands_nest() {
        let x = normals(500, 2);
        let f = summarize_fan(&x, &DEFAULT_LEVELS, QuantileRule::default());
        for w in 0..DEFAULT_LEVELS.len() - 1 {
            assert!(f.lower[w + 1] <= f.lower[w] && f.upper[w + 1] >= f.upper[w]);
        }
        assert!(f.lower[0] <= f.median && f.median <= f.upper[0]);
    }

    #[test]
    fn pooled_quantile_in_envelope() {
        // interpolation can leave the envelope: {0,10} ∪ {0,10} at p=0.4
        let part = [0.0, 10.0];
        let pooled = [0.0, 0.0, 10.0, 10.0];
        let qi = |s: &[f64]| quantile(s, 0.4, QuantileRule::Interpolated);
        assert!(qi(&pooled) < qi(&part));
        let qc = |s: &[f64]| quantile(s, 0.4, QuantileRule::InverseCdf);
        assert_eq!(qc(&pooled), qc(&part));
    }

    #[test]
    fn infinite_entries() {
        let s = [f64::NEG_INFINITY, f64::NEG_INFINITY, -3.0, -2.0];
        assert_eq!(quantile(&s, 0.4, QuantileRule::Interpolated), f64::NEG_INFINITY);
        assert_eq!(quantile(&s, 0.9, QuantileRule::InverseCdf), -2.0);
    }
}
