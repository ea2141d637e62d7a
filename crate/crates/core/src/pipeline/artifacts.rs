//! On-disk records shared between stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, YearPlan};
use super::{PipelineError, Stage};
use crate::ingest::Sex;
use crate::loo::{LooComparison, StackingWeights};

const LOCKFILE: &str = include_str!("../../../../Cargo.lock");

/// Dependencies whose resolved versions go into the manifest.
const TRACKED: [&str; 9] = [
    "nalgebra", "rand", "rand_chacha", "rand_distr", "rayon", "serde_json", "statrs", "toml", "csv",
];

/// Versions of the numerical dependencies as resolved in the lockfile.
pub fn dependency_versions() -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut name: Option<&str> = None;
    for line in LOCKFILE.lines() {
        if let Some(n) = line.strip_prefix("name = ") {
            name = Some(n.trim_matches('"'));
        } else if let (Some(v), Some(n)) = (line.strip_prefix("version = "), name.take()) {
            if TRACKED.contains(&n) {
                out.entry(n.to_string()).or_default().push(v.trim_matches('"').to_string());
            }
        }
    }
    out.into_iter().map(|(k, v)| (k, v.join(", "))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub completed: bool,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub x_old: u32,
    pub rhat_max: Option<f64>,
    pub ess_min: Option<f64>,
    pub divergence_rate: f64,
    pub n_high_rhat: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub chains: u64,
    pub stacking: u64,
    pub forecast: u64,
    pub predictive: u64,
}

impl Seeds {
    pub fn from_base(seed: u64) -> Self {
        Self {
            chains: seed,
            stacking: seed.wrapping_add(1),
            forecast: seed.wrapping_add(2),
            predictive: seed.wrapping_add(3),
        }
    }
}

/// Run provenance. Wall times are the only entries that vary between
/// otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mortcast_version: String,
    pub dependencies: BTreeMap<String, String>,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub years: Option<YearPlan>,
    pub stages: BTreeMap<Stage, StageRecord>,
    pub fits: BTreeMap<u32, FitRecord>,
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            mortcast_version: env!("CARGO_PKG_VERSION").to_string(),
            dependencies: dependency_versions(),
            config: config.clone(),
            seeds: Seeds::from_base(config.seed),
            years: None,
            stages: BTreeMap::new(),
            fits: BTreeMap::new(),
        }
    }

    pub fn completed(&self, stage: Stage) -> bool {
        self.stages.get(&stage).is_some_and(|r| r.completed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexAudit {
    pub sex: Sex,
    pub ages: (u32, u32),
    pub years: (i32, i32),
    pub n_cells: usize,
    pub n_included: usize,
    pub n_zero_deaths: usize,
    pub included_cohorts: Option<(i32, i32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub source: String,
    pub plan: YearPlan,
    pub sexes: Vec<SexAudit>,
}

/// One model of the stacking table, best LOO score first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingRow {
    pub x_old: u32,
    #[serde(flatten)]
    pub loo: LooComparison,
    pub rhat_max: Option<f64>,
    /// Some parameter exceeded the R-hat threshold; the model still takes part.
    pub high_rhat: bool,
    pub divergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackingTable {
    pub menu: Vec<u32>,
    pub weights: StackingWeights,
    pub n_cells: usize,
    /// Cells dropped because some model gave them a non-finite score.
    pub n_cells_excluded: usize,
    pub rows: Vec<StackingRow>,
}

impl StackingTable {
    pub fn weight_of(&self, x_old: u32) -> Option<f64> {
        self.menu.iter().position(|&x| x == x_old).map(|k| self.weights.weights[k])
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, PipelineError> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}
