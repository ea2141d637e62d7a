//! End-to-end run: ingest, fit every transition age on the menu, score them
//! by PSIS-LOO, stack, forecast and assess against held-back years. Each
//! stage writes its artifacts under the output directory and later stages
//! read them back, so stages can be run one at a time or resumed.

mod artifacts;
pub mod config;
mod stages;

pub use artifacts::{dependency_versions, Audit, FitRecord, Manifest, Seeds, SexAudit, StackingRow, StackingTable, StageRecord};
pub use config::{DataConfig, RunConfig, YearPlan};
pub use stages::Pipeline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::ForecastError;
use crate::ingest::IngestError;
use crate::loo::LooError;
use crate::model::ModelError;
use crate::sampler::SamplerError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("output directory {path}: {message}")]
    Output { path: String, message: String },
    #[error("stage {stage} needs {missing}; run `{stage_needed}` first")]
    Missing {
        stage: Stage,
        missing: String,
        stage_needed: Stage,
    },
    #[error("x_old = {x_old}: {source}")]
    Fit { x_old: u32, source: SamplerError },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Loo(#[from] LooError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Fit,
    Loo,
    Stack,
    Forecast,
    Assess,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Fit,
        Stage::Loo,
        Stage::Stack,
        Stage::Forecast,
        Stage::Assess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Fit => "fit",
            Stage::Loo => "loo",
            Stage::Stack => "stack",
            Stage::Forecast => "forecast",
            Stage::Assess => "assess",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage '{s}'")))
    }
}

#[cfg(test)]
mod tests;
