//! Empirical coverage of predictive intervals on held-back years.

use serde::{Deserialize, Serialize};

use super::fan::{quantile, QuantileRule};
use super::{ForecastError, ForecastSurface};
use crate::ingest::{MortalityDataset, Sex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub sex: Sex,
    pub group: String,
    pub n: usize,
    pub inside: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub level: f64,
    pub n_cells: usize,
    pub n_inside: usize,
    pub coverage: f64,
    /// Cells with zero observed deaths have no empirical log rate.
    pub zero_deaths_excluded: usize,
    pub by_year: Vec<CoverageCell>,
    pub by_age_band: Vec<CoverageCell>,
}

/// Fraction of observations inside their closed interval.
pub fn interval_coverage(intervals: &[(f64, f64)], observed: &[f64]) -> f64 {
    assert_eq!(intervals.len(), observed.len());
    if observed.is_empty() {
        return f64::NAN;
    }
    let inside = intervals
        .iter()
        .zip(observed)
        .filter(|((lo, hi), &o)| *lo <= o && o <= *hi)
        .count();
    inside as f64 / observed.len() as f64
}

fn tally(sex: Sex, group: String, hits: &[bool]) -> CoverageCell {
    let inside = hits.iter().filter(|&&h| h).count();
    CoverageCell {
        sex,
        group,
        n: hits.len(),
        inside,
        fraction: if hits.is_empty() { f64::NAN } else { inside as f64 / hits.len() as f64 },
    }
}

/// Scores observed `log(d/E)` against the central `level` interval of a
/// predictive surface at every year of the surface. `observed` holds one
/// dataset per surface sex, covering the surface's ages and years.
pub fn holdback_coverage(
    predictive: &ForecastSurface,
    observed: &[MortalityDataset],
    level: f64,
    band_width: u32,
) -> Result<CoverageReport, ForecastError> {
    if observed.len() != predictive.sexes.len() {
        return Err(ForecastError::Input(format!(
            "{} observed datasets for {} sexes",
            observed.len(),
            predictive.sexes.len()
        )));
    }
    let rule = QuantileRule::default();
    let (p_lo, p_hi) = (0.5 - level / 2.0, 0.5 + level / 2.0);
    let band_width = band_width.max(1);
    let mut by_year = Vec::new();
    let mut by_age_band = Vec::new();
    let (mut n_cells, mut n_inside, mut zeros) = (0, 0, 0);
    for (s, data) in observed.iter().enumerate() {
        let sex = predictive.sexes[s];
        let mut year_hits = vec![Vec::new(); predictive.years.len()];
        let n_bands = (predictive.ages.last().copied().unwrap_or(0) / band_width + 1) as usize;
        let mut band_hits = vec![Vec::new(); n_bands];
        for (a, &age) in predictive.ages.iter().enumerate() {
            let ai = data
                .ages
                .iter()
                .position(|&x| x == age)
                .ok_or_else(|| ForecastError::Input(format!("observed data lacks age {age}")))?;
            for (y, &year) in predictive.years.iter().enumerate() {
                let yi = data
                    .years
                    .iter()
                    .position(|&x| x == year)
                    .ok_or_else(|| ForecastError::Input(format!("observed data lacks year {year}")))?;
                if !data.is_included(ai, yi) {
                    continue;
                }
                let d = data.deaths_at(ai, yi);
                if d <= 0.0 {
                    zeros += 1;
                    continue;
                }
                let obs = (d / data.exposure_at(ai, yi)).ln();
                let mut cell = predictive.cell(s, a, y);
                cell.sort_by(f64::total_cmp);
                let (lo, hi) = (quantile(&cell, p_lo, rule), quantile(&cell, p_hi, rule));
                let hit = lo <= obs && obs <= hi;
                year_hits[y].push(hit);
                band_hits[(age / band_width) as usize].push(hit);
                n_cells += 1;
                n_inside += hit as usize;
            }
        }
        for (y, hits) in year_hits.iter().enumerate() {
            by_year.push(tally(sex, predictive.years[y].to_string(), hits));
        }
        for (b, hits) in band_hits.iter().enumerate() {
            if hits.is_empty() {
                continue;
            }
            let lo = b as u32 * band_width;
            by_age_band.push(tally(sex, format!("{lo}-{}", lo + band_width - 1), hits));
        }
    }
    Ok(CoverageReport {
        level,
        n_cells,
        n_inside,
        coverage: if n_cells == 0 { f64::NAN } else { n_inside as f64 / n_cells as f64 },
        zero_deaths_excluded: zeros,
        by_year,
        by_age_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_intervals_only_catch_ties() {
        let obs = [1.0, 2.0, 3.0];
        let iv = [(1.0, 1.0), (2.5, 2.5), (3.1, 3.1)];
        assert!((interval_coverage(&iv, &obs) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn widening_never_lowers_coverage() {
        let obs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut prev = 0.0;
        for w in [0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
            let iv: Vec<(f64, f64)> = (0..50).map(|i| ((i as f64 * 0.11).cos() * 0.5 - w, (i as f64 * 0.11).cos() * 0.5 + w)).collect();
            let c = interval_coverage(&iv, &obs);
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(prev, 1.0);
    }
}
