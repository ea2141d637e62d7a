//! Run configuration: one TOML file drives every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::forecast::DEFAULT_LEVELS;
use crate::ingest::Sex;
use crate::loo::StackMode;
use crate::model::SexMode;
use crate::sampler::ChainConfig;
use crate::synthetic::SyntheticConfig;

/// HMD input files. Both hold every sex, so one pair serves joint mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub deaths: PathBuf,
    pub exposures: PathBuf,
    /// Sex modelled in single mode.
    #[serde(default = "default_sex")]
    pub sex: Sex,
    /// Top age kept; HMD tables run to 110.
    #[serde(default = "default_max_age")]
    pub max_age: u32,
    #[serde(default)]
    pub exclude_oldest_cohorts: usize,
}

fn default_sex() -> Sex {
    Sex::Female
}

fn default_max_age() -> u32 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    /// Simulated data instead of HMD files. Its own `sex_mode` is overridden
    /// by the run's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    /// Fitted years, inclusive. Defaults to every data year before the
    /// hold-back window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_years: Option<(i32, i32)>,
    /// First held-back year; the window runs to the last data year.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdback_from: Option<i32>,
    pub sex_mode: SexMode,
    /// Candidate transition ages.
    pub menu: Vec<u32>,
    /// Forecast years past the last fitted year.
    pub horizon: u32,
    pub seed: u64,
    pub output: PathBuf,
    pub chains: ChainConfig,
    /// Size of the stacked posterior sample.
    pub stacked_draws: usize,
    pub stack_mode: StackMode,
    /// Fit menu entries concurrently instead of one after another.
    pub parallel_menu: bool,
    /// Chains start uniformly on `[−r, r]` per coordinate.
    pub init_radius: f64,
    pub fan_levels: Vec<f64>,
    pub coverage_level: f64,
    pub coverage_band: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            synthetic: None,
            fit_years: None,
            holdback_from: None,
            sex_mode: SexMode::Single,
            menu: (80..=95).collect(),
            horizon: 50,
            seed: 20_240_601,
            output: PathBuf::from("mortcast-out"),
            chains: ChainConfig::default(),
            stacked_draws: 4000,
            stack_mode: StackMode::default(),
            parallel_menu: false,
            init_radius: 2.0,
            fan_levels: DEFAULT_LEVELS.to_vec(),
            coverage_level: 0.9,
            coverage_band: 10,
        }
    }
}

impl RunConfig {
    /// Parses TOML, resolving relative data and output paths against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(base) = base {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            };
            if let Some(d) = cfg.data.as_mut() {
                fix(&mut d.deaths);
                fix(&mut d.exposures);
            }
            fix(&mut cfg.output);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, Some(&base))
    }

    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string(self).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn sexes(&self) -> Vec<Sex> {
        match self.sex_mode {
            SexMode::Joint => Sex::BOTH.to_vec(),
            SexMode::Single => vec![self.data.as_ref().map_or(Sex::Female, |d| d.sex)],
        }
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (&self.data, &self.synthetic) {
            (None, None) => return bad("one of [data] or [synthetic] is required".into()),
            (Some(_), Some(_)) => return bad("[data] and [synthetic] are mutually exclusive".into()),
            _ => {}
        }
        if self.menu.is_empty() {
            return bad("menu must list at least one transition age".into());
        }
        if self.menu.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("menu must be strictly increasing, got {:?}", self.menu));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if let Some((a, b)) = self.fit_years {
            if b < a + 2 {
                return bad(format!("fit_years {a}-{b} spans fewer than 3 years"));
            }
            if let Some(h) = self.holdback_from {
                if h <= b {
                    return bad(format!("holdback_from {h} must follow the last fitted year {b}"));
                }
            }
        }
        self.chains.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.chains.retained_per_chain() == 0 {
            return bad("chain settings retain no draws".into());
        }
        if self.stacked_draws == 0 {
            return bad("stacked_draws must be positive".into());
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return bad(format!("init_radius {} must be positive", self.init_radius));
        }
        if self.fan_levels.is_empty() || self.fan_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return bad(format!("fan_levels must lie in (0, 1), got {:?}", self.fan_levels));
        }
        if !(self.coverage_level > 0.0 && self.coverage_level < 1.0) {
            return bad(format!("coverage_level {} must lie in (0, 1)", self.coverage_level));
        }
        if self.coverage_band == 0 {
            return bad("coverage_band must be positive".into());
        }
        Ok(())
    }
}

/// Fit and hold-back windows resolved against the years present in the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearPlan {
    pub fit: (i32, i32),
    pub holdback: Option<(i32, i32)>,
}

impl YearPlan {
    pub fn resolve(cfg: &RunConfig, data_years: (i32, i32)) -> Result<Self, PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let holdback_from = cfg.holdback_from.or_else(|| {
            // simulated hold-back years are scored by default
            let syn = cfg.synthetic.as_ref()?;
            (syn.n_holdback > 0 && cfg.fit_years.is_none()).then(|| syn.last_fit_year() + 1)
        });
        let fit = match cfg.fit_years {
            Some(f) => f,
            None => (data_years.0, holdback_from.map_or(data_years.1, |h| h - 1)),
        };
        if fit.0 < data_years.0 || fit.1 > data_years.1 || fit.1 < fit.0 + 2 {
            return bad(format!(
                "fit years {}-{} must span at least 3 years inside the data years {}-{}",
                fit.0, fit.1, data_years.0, data_years.1
            ));
        }
        let holdback = match holdback_from {
            None => None,
            Some(h) if h <= fit.1 => {
                return bad(format!("hold-back year {h} overlaps the fitted years {}-{}", fit.0, fit.1))
            }
            Some(h) if h > data_years.1 => {
                return bad(format!("hold-back year {h} is past the last data year {}", data_years.1))
            }
            Some(h) => Some((h, data_years.1)),
        };
        if let Some((a, b)) = holdback {
            if b - fit.1 > cfg.horizon as i32 {
                return bad(format!(
                    "horizon {} does not reach the end of the hold-back window {a}-{b}",
                    cfg.horizon
                ));
            }
        }
        Ok(Self { fit, holdback })
    }

    pub fn forecast_years(&self, horizon: u32) -> Vec<i32> {
        (self.fit.0..=self.fit.1 + horizon as i32).collect()
    }
}
