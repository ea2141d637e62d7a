//! Human Mortality Database 1x1 tables and the rectangular deaths/exposures
//! grid the model is fitted to.

use std::fmt;
use std::io::Write;
use std::ops::RangeInclusive;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Age token HMD uses for the terminal open interval.
pub const OPEN_AGE_TOKEN: &str = "110+";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("table structure: {0}")]
    Structure(String),
    #[error("requested years {requested_start}-{requested_end} not covered by table years {available_start}-{available_end}")]
    Range {
        requested_start: i32,
        requested_end: i32,
        available_start: i32,
        available_end: i32,
    },
    #[error("deaths and exposures tables disagree: {0}")]
    Alignment(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub const BOTH: [Sex; 2] = [Sex::Female, Sex::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sex {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            other => Err(IngestError::Argument(format!("unknown sex '{other}'"))),
        }
    }
}

/// One row of an HMD 1x1 table. `None` marks the "." missing-value token.
#[derive(Debug, Clone, PartialEq)]
pub struct HmdRecord {
    pub year: i32,
    pub age: u32,
    /// True for the terminal "110+" row.
    pub open_interval: bool,
    pub female: Option<f64>,
    pub male: Option<f64>,
    pub total: Option<f64>,
}

impl HmdRecord {
    pub fn value(&self, sex: Sex) -> Option<f64> {
        match sex {
            Sex::Female => self.female,
            Sex::Male => self.male,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.female.is_none() && self.male.is_none() && self.total.is_none()
    }
}

/// A parsed HMD table: consecutive year blocks, each holding ages `0..=max_age`.
#[derive(Debug, Clone, PartialEq)]
pub struct HmdTable {
    pub header: Vec<String>,
    pub records: Vec<HmdRecord>,
    pub max_age: u32,
}

impl HmdTable {
    pub fn years(&self) -> RangeInclusive<i32> {
        let first = self.records.first().map_or(0, |r| r.year);
        let last = self.records.last().map_or(-1, |r| r.year);
        first..=last
    }

    pub fn n_years(&self) -> usize {
        self.records.len() / (self.max_age as usize + 1)
    }

    pub fn record(&self, year: i32, age: u32) -> Option<&HmdRecord> {
        let first = *self.years().start();
        if year < first || age > self.max_age {
            return None;
        }
        let idx = (year - first) as usize * (self.max_age as usize + 1) + age as usize;
        self.records.get(idx)
    }

    /// Writes the table back in HMD layout with `decimals` digits after the point.
    pub fn to_hmd_string(&self, decimals: usize) -> String {
        let mut out = String::new();
        for line in &self.header {
            out.push_str(line);
            out.push('\n');
        }
        let fmt_val = |v: Option<f64>| match v {
            Some(x) => format!("{x:>16.decimals$}"),
            None => format!("{:>16}", "."),
        };
        for r in &self.records {
            let age = if r.open_interval {
                format!("{}+", r.age)
            } else {
                r.age.to_string()
            };
            out.push_str(&format!(
                "{:>6}{:>12}{}{}{}\n",
                r.year,
                age,
                fmt_val(r.female),
                fmt_val(r.male),
                fmt_val(r.total)
            ));
        }
        out
    }
}

fn parse_value(tok: &str, line: usize) -> Result<Option<f64>, IngestError> {
    if tok == "." {
        return Ok(None);
    }
    tok.parse::<f64>()
        .map(Some)
        .map_err(|_| IngestError::Parse {
            line,
            message: format!("invalid numeric value '{tok}'"),
        })
}

fn parse_age(tok: &str, line: usize) -> Result<(u32, bool), IngestError> {
    let (digits, open) = match tok.strip_suffix('+') {
        Some(d) => (d, true),
        None => (tok, false),
    };
    digits
        .parse::<u32>()
        .map(|a| (a, open))
        .map_err(|_| IngestError::Parse {
            line,
            message: format!("invalid age '{tok}'"),
        })
}

/// Parses an HMD `Deaths_1x1` / `Exposures_1x1` text table.
///
/// Lines before the first data row (title, blank line, column names) are kept
/// as the header. Every data row must carry exactly five whitespace-separated
/// fields: year, age, female, male, total.
pub fn parse_hmd_table(text: &str) -> Result<HmdTable, IngestError> {
    let mut header = Vec::new();
    let mut records: Vec<HmdRecord> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if records.is_empty() {
            let is_data = fields.first().is_some_and(|f| f.parse::<i32>().is_ok());
            if !is_data {
                header.push(raw.trim_end().to_string());
                continue;
            }
        } else if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(IngestError::Parse {
                line: line_no,
                message: format!("expected 5 columns, found {}", fields.len()),
            });
        }
        let year = fields[0].parse::<i32>().map_err(|_| IngestError::Parse {
            line: line_no,
            message: format!("invalid year '{}'", fields[0]),
        })?;
        let (age, open_interval) = parse_age(fields[1], line_no)?;
        records.push(HmdRecord {
            year,
            age,
            open_interval,
            female: parse_value(fields[2], line_no)?,
            male: parse_value(fields[3], line_no)?,
            total: parse_value(fields[4], line_no)?,
        });
    }
    let max_age = validate_structure(&records)?;
    Ok(HmdTable {
        header,
        records,
        max_age,
    })
}

fn validate_structure(records: &[HmdRecord]) -> Result<u32, IngestError> {
    let first = records
        .first()
        .ok_or_else(|| IngestError::Structure("table has no data rows".into()))?;
    let mut max_age = None;
    let mut expected_year = first.year;
    let mut expected_age = 0u32;
    for (i, r) in records.iter().enumerate() {
        if r.year != expected_year || r.age != expected_age {
            // A year block may end once it reaches the table-wide maximum age.
            let block_ended = r.year == expected_year + 1 && r.age == 0 && expected_age > 0;
            if !block_ended {
                return Err(IngestError::Structure(format!(
                    "row {}: expected year {expected_year} age {expected_age}, found year {} age {}",
                    i + 1,
                    r.year,
                    r.age
                )));
            }
            let last_age = expected_age - 1;
            match max_age {
                None => max_age = Some(last_age),
                Some(m) if m != last_age => {
                    return Err(IngestError::Structure(format!(
                        "year {} ends at age {last_age}, earlier years end at {m}",
                        expected_year
                    )))
                }
                _ => {}
            }
            expected_year += 1;
            expected_age = 0;
        }
        expected_age += 1;
    }
    let last_age = expected_age - 1;
    match max_age {
        Some(m) if m != last_age => Err(IngestError::Structure(format!(
            "final year {expected_year} ends at age {last_age}, earlier years end at {m}"
        ))),
        _ => Ok(last_age),
    }
}

pub fn read_hmd_file(path: impl AsRef<std::path::Path>) -> Result<HmdTable, IngestError> {
    let text = std::fs::read_to_string(path)?;
    parse_hmd_table(&text)
}

/// Rectangular deaths/exposures grid for one sex. Matrices are stored
/// age-major: entry `(a, t)` lives at `a * n_years + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityDataset {
    pub sex: Sex,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub deaths: Vec<f64>,
    pub exposures: Vec<f64>,
    pub included: Vec<bool>,
}

impl MortalityDataset {
    /// Builds a dataset from age-major matrices, marking cells with
    /// non-positive or non-finite exposure as excluded.
    pub fn new(
        sex: Sex,
        ages: RangeInclusive<u32>,
        years: RangeInclusive<i32>,
        deaths: Vec<f64>,
        exposures: Vec<f64>,
    ) -> Result<Self, IngestError> {
        let ages: Vec<u32> = ages.collect();
        let years: Vec<i32> = years.collect();
        let n = ages.len() * years.len();
        if n == 0 {
            return Err(IngestError::Argument("empty age or year axis".into()));
        }
        if deaths.len() != n || exposures.len() != n {
            return Err(IngestError::Alignment(format!(
                "expected {n} cells, got {} deaths and {} exposures",
                deaths.len(),
                exposures.len()
            )));
        }
        let mut included = Vec::with_capacity(n);
        for (i, (&d, &e)) in deaths.iter().zip(&exposures).enumerate() {
            let ok_e = e.is_finite() && e > 0.0;
            if ok_e && !(d.is_finite() && d >= 0.0) {
                return Err(IngestError::Argument(format!(
                    "cell {i}: deaths must be finite and non-negative, got {d}"
                )));
            }
            included.push(ok_e);
        }
        Ok(Self {
            sex,
            ages,
            years,
            deaths,
            exposures,
            included,
        })
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    #[inline]
    pub fn index(&self, age_idx: usize, year_idx: usize) -> usize {
        age_idx * self.years.len() + year_idx
    }

    pub fn deaths_at(&self, age_idx: usize, year_idx: usize) -> f64 {
        self.deaths[self.index(age_idx, year_idx)]
    }

    pub fn exposure_at(&self, age_idx: usize, year_idx: usize) -> f64 {
        self.exposures[self.index(age_idx, year_idx)]
    }

    pub fn is_included(&self, age_idx: usize, year_idx: usize) -> bool {
        self.included[self.index(age_idx, year_idx)]
    }

    pub fn n_included(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn age_range(&self) -> RangeInclusive<u32> {
        self.ages[0]..=*self.ages.last().unwrap()
    }

    pub fn year_range(&self) -> RangeInclusive<i32> {
        self.years[0]..=*self.years.last().unwrap()
    }

    /// Cohorts (year of birth) spanned by the grid, oldest first.
    pub fn cohort_range(&self) -> RangeInclusive<i32> {
        let oldest = self.years[0] - *self.ages.last().unwrap() as i32;
        let newest = *self.years.last().unwrap() - self.ages[0] as i32;
        oldest..=newest
    }

    /// Range of cohorts with at least one included cell.
    pub fn included_cohort_range(&self) -> Option<RangeInclusive<i32>> {
        let mut lo = i32::MAX;
        let mut hi = i32::MIN;
        for (a, &age) in self.ages.iter().enumerate() {
            for (t, &year) in self.years.iter().enumerate() {
                if self.is_included(a, t) {
                    let c = year - age as i32;
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
        }
        (lo <= hi).then_some(lo..=hi)
    }

    /// Restricts the dataset to a sub-range of its years.
    pub fn restrict_years(&self, years: RangeInclusive<i32>) -> Result<Self, IngestError> {
        let avail = self.year_range();
        if years.start() < avail.start() || years.end() > avail.end() || years.is_empty() {
            return Err(IngestError::Range {
                requested_start: *years.start(),
                requested_end: *years.end(),
                available_start: *avail.start(),
                available_end: *avail.end(),
            });
        }
        let off = (years.start() - avail.start()) as usize;
        let nt = (years.end() - years.start() + 1) as usize;
        let mut out = Self {
            sex: self.sex,
            ages: self.ages.clone(),
            years: years.clone().collect(),
            deaths: Vec::with_capacity(self.n_ages() * nt),
            exposures: Vec::with_capacity(self.n_ages() * nt),
            included: Vec::with_capacity(self.n_ages() * nt),
        };
        for a in 0..self.n_ages() {
            for t in off..off + nt {
                let i = self.index(a, t);
                out.deaths.push(self.deaths[i]);
                out.exposures.push(self.exposures[i]);
                out.included.push(self.included[i]);
            }
        }
        Ok(out)
    }

    /// Keeps ages `0..=max_age` (or the dataset's own top age if lower).
    pub fn restrict_ages(&self, max_age: u32) -> Result<Self, IngestError> {
        let keep = self.ages.iter().take_while(|&&a| a <= max_age).count();
        if keep == 0 {
            return Err(IngestError::Argument(format!("no ages at or below {max_age}")));
        }
        let n = keep * self.n_years();
        Ok(Self {
            sex: self.sex,
            ages: self.ages[..keep].to_vec(),
            years: self.years.clone(),
            deaths: self.deaths[..n].to_vec(),
            exposures: self.exposures[..n].to_vec(),
            included: self.included[..n].to_vec(),
        })
    }

    /// Marks every cell belonging to the `n` oldest cohorts of the grid as excluded.
    pub fn exclude_oldest_cohorts(&mut self, n: usize) -> Result<(), IngestError> {
        self.included = cohort_mask(self, n)?;
        Ok(())
    }

    /// Long-format audit table: sex, age, year, deaths, exposure, included.
    pub fn write_audit_csv<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sex", "age", "year", "deaths", "exposure", "included"])?;
        for (a, age) in self.ages.iter().enumerate() {
            for (t, year) in self.years.iter().enumerate() {
                let i = self.index(a, t);
                w.write_record([
                    self.sex.as_str().to_string(),
                    age.to_string(),
                    year.to_string(),
                    self.deaths[i].to_string(),
                    self.exposures[i].to_string(),
                    self.included[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads back a table written by [`MortalityDataset::write_audit_csv`].
pub fn read_audit_csv<R: std::io::Read>(reader: R) -> Result<MortalityDataset, IngestError> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows: Vec<(Sex, u32, i32, f64, f64, bool)> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| IngestError::Parse {
            line: i + 2,
            message: format!("bad {what}"),
        };
        if rec.len() != 6 {
            return Err(bad("field count"));
        }
        rows.push((
            rec[0].parse()?,
            rec[1].parse().map_err(|_| bad("age"))?,
            rec[2].parse().map_err(|_| bad("year"))?,
            rec[3].parse().map_err(|_| bad("deaths"))?,
            rec[4].parse().map_err(|_| bad("exposure"))?,
            rec[5].parse().map_err(|_| bad("included flag"))?,
        ));
    }
    let first = rows.first().ok_or_else(|| IngestError::Structure("empty audit table".into()))?;
    let sex = first.0;
    let (a0, y0) = (first.1, first.2);
    let a1 = rows.iter().map(|r| r.1).max().unwrap();
    let y1 = rows.iter().map(|r| r.2).max().unwrap();
    let nt = (y1 - y0 + 1) as usize;
    let n = (a1 - a0 + 1) as usize * nt;
    if rows.len() != n {
        return Err(IngestError::Structure(format!("{} rows for a {n}-cell grid", rows.len())));
    }
    let mut ds = MortalityDataset {
        sex,
        ages: (a0..=a1).collect(),
        years: (y0..=y1).collect(),
        deaths: Vec::with_capacity(n),
        exposures: Vec::with_capacity(n),
        included: Vec::with_capacity(n),
    };
    for (i, r) in rows.iter().enumerate() {
        let want = (a0 + (i / nt) as u32, y0 + (i % nt) as i32);
        if r.0 != sex || (r.1, r.2) != want {
            return Err(IngestError::Structure(format!("row {} out of age-major order", i + 2)));
        }
        ds.deaths.push(r.3);
        ds.exposures.push(r.4);
        ds.included.push(r.5);
    }
    Ok(ds)
}

/// Assembles the model grid for one sex from matching deaths and exposures tables.
///
/// Cells whose deaths or exposure are missing, or whose exposure is not
/// positive, are marked excluded.
pub fn align_dataset(
    deaths: &HmdTable,
    exposures: &HmdTable,
    sex: Sex,
    years: RangeInclusive<i32>,
) -> Result<MortalityDataset, IngestError> {
    if deaths.max_age != exposures.max_age {
        return Err(IngestError::Alignment(format!(
            "deaths ages 0-{} vs exposures ages 0-{}",
            deaths.max_age, exposures.max_age
        )));
    }
    for table in [deaths, exposures] {
        let avail = table.years();
        if years.is_empty() || years.start() < avail.start() || years.end() > avail.end() {
            return Err(IngestError::Range {
                requested_start: *years.start(),
                requested_end: *years.end(),
                available_start: *avail.start(),
                available_end: *avail.end(),
            });
        }
    }
    let n_years = (years.end() - years.start() + 1) as usize;
    let n_ages = deaths.max_age as usize + 1;
    let mut d = Vec::with_capacity(n_ages * n_years);
    let mut e = Vec::with_capacity(n_ages * n_years);
    let mut missing = Vec::with_capacity(n_ages * n_years);
    for age in 0..=deaths.max_age {
        for year in years.clone() {
            let dr = deaths.record(year, age).ok_or_else(|| {
                IngestError::Alignment(format!("deaths table lacks year {year} age {age}"))
            })?;
            let er = exposures.record(year, age).ok_or_else(|| {
                IngestError::Alignment(format!("exposures table lacks year {year} age {age}"))
            })?;
            match (dr.value(sex), er.value(sex)) {
                (Some(dv), Some(ev)) => {
                    d.push(dv);
                    e.push(ev);
                    missing.push(false);
                }
                _ => {
                    d.push(0.0);
                    e.push(0.0);
                    missing.push(true);
                }
            }
        }
    }
    let mut ds = MortalityDataset::new(sex, 0..=deaths.max_age, years, d, e)?;
    for (inc, miss) in ds.included.iter_mut().zip(missing) {
        *inc &= !miss;
    }
    Ok(ds)
}

/// Inclusion mask with the `n_excluded_oldest` oldest cohorts of the grid removed.
pub fn cohort_mask(
    dataset: &MortalityDataset,
    n_excluded_oldest: usize,
) -> Result<Vec<bool>, IngestError> {
    let cohorts = dataset.cohort_range();
    let n_cohorts = (cohorts.end() - cohorts.start() + 1) as usize;
    if n_excluded_oldest > n_cohorts {
        return Err(IngestError::Argument(format!(
            "cannot exclude {n_excluded_oldest} cohorts from a grid with {n_cohorts}"
        )));
    }
    let cutoff = cohorts.start() + n_excluded_oldest as i32;
    let mut mask = dataset.included.clone();
    for (a, &age) in dataset.ages.iter().enumerate() {
        for (t, &year) in dataset.years.iter().enumerate() {
            if year - (age as i32) < cutoff {
                mask[dataset.index(a, t)] = false;
            }
        }
    }
    Ok(mask)
}

/// Affine maps from raw age and calendar year to the standardized covariates
/// used in the model formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScaling {
    pub age_offset: f64,
    pub age_scale: f64,
    pub time_offset: f64,
    pub time_scale: f64,
}

impl AxisScaling {
    pub const DEFAULT_SCALE: f64 = 10.0;

    pub fn from_ranges(ages: RangeInclusive<u32>, years: RangeInclusive<i32>) -> Self {
        Self {
            age_offset: 0.5 * (*ages.start() as f64 + *ages.end() as f64),
            age_scale: Self::DEFAULT_SCALE,
            time_offset: 0.5 * (*years.start() as f64 + *years.end() as f64),
            time_scale: Self::DEFAULT_SCALE,
        }
    }

    #[inline]
    pub fn age(&self, age: f64) -> f64 {
        (age - self.age_offset) / self.age_scale
    }

    #[inline]
    pub fn time(&self, year: f64) -> f64 {
        (year - self.time_offset) / self.time_scale
    }

    #[inline]
    pub fn raw_age(&self, x: f64) -> f64 {
        x * self.age_scale + self.age_offset
    }

    #[inline]
    pub fn raw_time(&self, t: f64) -> f64 {
        t * self.time_scale + self.time_offset
    }
}

/// Grid-midpoint centring with decade scaling on both axes.
pub fn standardize_axes(dataset: &MortalityDataset) -> AxisScaling {
    AxisScaling::from_ranges(dataset.age_range(), dataset.year_range())
}
