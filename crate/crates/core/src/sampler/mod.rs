//! Multi-chain NUTS driver with thinned draw storage and run diagnostics.

pub mod diagnostics;
pub mod nuts;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{ess, param_diagnostics, split_rhat, ParamDiagnostic};
pub use nuts::{DualAveraging, Nuts, PhasePoint, TransitionStats, VarianceAdapter};

use crate::model::reduced::ReducedModel;
use crate::model::MortalityModel;

/// Reporting threshold for R-hat.
pub const RHAT_THRESHOLD: f64 = 1.05;
/// Post-warm-up divergence fraction that triggers a warning.
pub const DIVERGENCE_WARN: f64 = 0.01;

/// Unnormalized log density with gradient on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Writes the gradient into `grad` and returns the log density; any
    /// non-finite return marks the point as invalid.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for MortalityModel {
    fn dim(&self) -> usize {
        MortalityModel::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_grad(x, grad)
    }
}

impl LogDensity for ReducedModel {
    fn dim(&self) -> usize {
        ReducedModel::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.log_posterior_grad(x, grad)
    }
}

/// Closure-backed density, handy for tests and toy targets.
pub struct FnDensity<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid chain config: {0}")]
    Config(String),
    #[error("chain {chain}: no finite starting point after {tries} attempts")]
    Init { chain: usize, tries: usize },
    #[error("chain {chain}: step size collapsed to {step}")]
    StepSize { chain: usize, step: f64 },
    #[error("chain {chain}: every post-warm-up transition diverged")]
    AllDivergent { chain: usize },
    #[error("diagnostics need at least 2 chains with 100 draws each (got {chains} x {draws})")]
    TooFewDraws { chains: usize, draws: usize },
    #[error("draw file: {0}")]
    Io(#[from] std::io::Error),
    #[error("draw file: {0}")]
    Csv(#[from] csv::Error),
    #[error("draw metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("draw file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub warmup_fraction: f64,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub max_tree_depth: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 8000,
            warmup_fraction: 0.5,
            thin: 4,
            seed: 20_240_601,
            target_acceptance: 0.8,
            max_tree_depth: 10,
        }
    }
}

impl ChainConfig {
    pub fn n_warmup(&self) -> usize {
        (self.n_iterations as f64 * self.warmup_fraction).round() as usize
    }

    pub fn n_sampling(&self) -> usize {
        self.n_iterations - self.n_warmup()
    }

    /// Draws kept per chain after thinning.
    pub fn retained_per_chain(&self) -> usize {
        self.n_sampling() / self.thin
    }

    pub fn retained_total(&self) -> usize {
        self.n_chains * self.retained_per_chain()
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} not in [0, 1)", self.warmup_fraction));
        }
        if self.thin == 0 || self.n_sampling() % self.thin != 0 {
            return bad(format!(
                "thin {} must divide the {} post-warm-up iterations",
                self.thin,
                self.n_sampling()
            ));
        }
        if self.retained_per_chain() < 100 {
            return bad(format!(
                "only {} retained draws per chain; need at least 100",
                self.retained_per_chain()
            ));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad(format!("target_acceptance {} not in (0, 1)", self.target_acceptance));
        }
        if self.max_tree_depth == 0 {
            return bad("max_tree_depth must be positive".into());
        }
        Ok(())
    }
}

/// Where each chain starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    /// Every coordinate uniform on `[−r, r]`.
    Uniform(f64),
    /// `center + U[−r, r]` per coordinate.
    Jitter { center: Vec<f64>, radius: f64 },
    /// Explicit start per chain.
    Fixed(Vec<Vec<f64>>),
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::Uniform(2.0)
    }
}

const INIT_TRIES: usize = 100;

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    /// Retained post-warm-up draws, `[draw][param]`.
    pub draws: Vec<Vec<f64>>,
    /// One entry per post-warm-up iteration (before thinning).
    #[serde(skip)]
    pub stats: Vec<TransitionStats>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub n_divergent: usize,
    pub n_divergent_warmup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub names: Vec<String>,
    pub config: ChainConfig,
    pub chains: Vec<ChainRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_chains: usize,
    pub retained_per_chain: usize,
    pub divergent: Vec<usize>,
    pub divergence_rate: f64,
    pub step_sizes: Vec<f64>,
    pub rhat_max: Option<f64>,
    pub ess_min: Option<f64>,
    pub high_rhat: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DrawMeta {
    names: Vec<String>,
    config: ChainConfig,
    step_sizes: Vec<f64>,
    inv_metric: Vec<Vec<f64>>,
    divergent: Vec<usize>,
    divergent_warmup: Vec<usize>,
    report: Option<RunReport>,
}

impl DrawStore {
    /// Store built from raw per-chain draws (no sampler records).
    pub fn from_draws(names: Vec<String>, config: ChainConfig, draws: Vec<Vec<Vec<f64>>>) -> Self {
        let dim = names.len();
        let chains = draws
            .into_iter()
            .map(|d| ChainRecord {
                draws: d,
                stats: Vec::new(),
                step_size: f64::NAN,
                inv_metric: vec![f64::NAN; dim],
                n_divergent: 0,
                n_divergent_warmup: 0,
            })
            .collect();
        Self {
            names,
            config,
            chains,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.draws.len())
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// All retained draws, chain-major.
    pub fn merged(&self) -> Vec<Vec<f64>> {
        thin_merge(self, 1)
    }

    pub fn divergence_rate(&self) -> f64 {
        let n: usize = self.chains.iter().map(|c| c.n_divergent).sum();
        n as f64 / (self.n_chains() * self.config.n_sampling()).max(1) as f64
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.chains.iter().flat_map(|c| c.draws.iter().map(move |d| d[j])).collect())
    }

    pub fn diagnostics(&self) -> Result<Vec<ParamDiagnostic>, SamplerError> {
        if self.n_chains() < 2 || self.draws_per_chain() < 100 {
            return Err(SamplerError::TooFewDraws {
                chains: self.n_chains(),
                draws: self.draws_per_chain(),
            });
        }
        let chains: Vec<Vec<Vec<f64>>> = self.chains.iter().map(|c| c.draws.clone()).collect();
        Ok(param_diagnostics(&self.names, &chains))
    }

    pub fn report(&self) -> RunReport {
        let mut warnings = Vec::new();
        let rate = self.divergence_rate();
        if rate > DIVERGENCE_WARN {
            warnings.push(format!(
                "{:.2}% of post-warm-up transitions diverged",
                100.0 * rate
            ));
        }
        let (rhat_max, ess_min, high_rhat) = match self.diagnostics() {
            Ok(diag) => {
                let rmax = diag.iter().filter_map(|d| d.rhat).fold(None, |a: Option<f64>, r| {
                    Some(a.map_or(r, |a| a.max(r)))
                });
                let emin = diag.iter().filter_map(|d| d.ess).fold(None, |a: Option<f64>, e| {
                    Some(a.map_or(e, |a| a.min(e)))
                });
                let high: Vec<String> = diag
                    .iter()
                    .filter(|d| d.rhat.is_some_and(|r| r > RHAT_THRESHOLD))
                    .map(|d| d.name.clone())
                    .collect();
                if !high.is_empty() {
                    warnings.push(format!("{} parameters with R-hat > {RHAT_THRESHOLD}", high.len()));
                }
                (rmax, emin, high)
            }
            Err(e) => {
                warnings.push(e.to_string());
                (None, None, Vec::new())
            }
        };
        RunReport {
            n_chains: self.n_chains(),
            retained_per_chain: self.draws_per_chain(),
            divergent: self.chains.iter().map(|c| c.n_divergent).collect(),
            divergence_rate: rate,
            step_sizes: self.chains.iter().map(|c| c.step_size).collect(),
            rhat_max,
            ess_min,
            high_rhat,
            warnings,
        }
    }

    /// Writes `<stem>.csv` (header `chain,draw,<names>`) and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), SamplerError> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(
            dir.join(format!("{stem}.csv")),
        )?));
        let mut header = vec!["chain".to_string(), "draw".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, d) in chain.draws.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string()];
                row.extend(d.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        let meta = DrawMeta {
            names: self.names.clone(),
            config: self.config.clone(),
            step_sizes: self.chains.iter().map(|c| c.step_size).collect(),
            inv_metric: self.chains.iter().map(|c| c.inv_metric.clone()).collect(),
            divergent: self.chains.iter().map(|c| c.n_divergent).collect(),
            divergent_warmup: self.chains.iter().map(|c| c.n_divergent_warmup).collect(),
            report: Some(self.report()),
        };
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(dir.join(format!("{stem}.json")))?),
            &meta,
        )?;
        Ok(())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self, SamplerError> {
        let meta: DrawMeta = serde_json::from_reader(BufReader::new(File::open(
            dir.join(format!("{stem}.json")),
        )?))?;
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(
            dir.join(format!("{stem}.csv")),
        )?));
        let header = r.headers()?.clone();
        if header.len() != meta.names.len() + 2
            || header.iter().skip(2).zip(&meta.names).any(|(a, b)| a != b)
        {
            return Err(SamplerError::Format("header does not match metadata".into()));
        }
        let n_chains = meta.divergent.len();
        let mut draws: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_chains];
        for rec in r.records() {
            let rec = rec?;
            let c: usize = rec[0]
                .parse()
                .map_err(|_| SamplerError::Format(format!("bad chain index {}", &rec[0])))?;
            let row: Result<Vec<f64>, _> = rec.iter().skip(2).map(|s| s.parse::<f64>()).collect();
            let row = row.map_err(|e| SamplerError::Format(e.to_string()))?;
            draws
                .get_mut(c)
                .ok_or_else(|| SamplerError::Format(format!("chain {c} out of range")))?
                .push(row);
        }
        let chains = draws
            .into_iter()
            .enumerate()
            .map(|(c, d)| ChainRecord {
                draws: d,
                stats: Vec::new(),
                step_size: meta.step_sizes[c],
                inv_metric: meta.inv_metric[c].clone(),
                n_divergent: meta.divergent[c],
                n_divergent_warmup: meta.divergent_warmup[c],
            })
            .collect();
        Ok(Self {
            names: meta.names,
            config: meta.config,
            chains,
        })
    }
}

/// Keeps draws `thin−1, 2·thin−1, …` of each chain and concatenates chains.
///
/// With `k = draws_per_chain / thin`, merged draw `s` comes from chain
/// `s / k`, stored draw `(s % k + 1)·thin − 1`; see [`merged_origin`] for the
/// post-warm-up iteration.
pub fn thin_merge(store: &DrawStore, thin: usize) -> Vec<Vec<f64>> {
    assert!(thin > 0, "thin must be positive");
    let mut out = Vec::with_capacity(store.total_draws() / thin);
    for c in &store.chains {
        assert!(
            c.draws.len() % thin == 0,
            "thin {thin} does not divide {} draws per chain",
            c.draws.len()
        );
        out.extend(c.draws.iter().skip(thin - 1).step_by(thin).cloned());
    }
    out
}

/// `(chain, post-warm-up iteration)` of merged draw `s` after
/// `thin_merge(store, thin)`, counting iterations from 0 and accounting for
/// the thinning already applied while sampling.
pub fn merged_origin(store: &DrawStore, thin: usize, s: usize) -> (usize, usize) {
    let k = store.draws_per_chain() / thin;
    let total_thin = thin * store.config.thin;
    (s / k, (s % k + 1) * total_thin - 1)
}

fn find_start<M: LogDensity + ?Sized>(
    model: &M,
    init: &InitStrategy,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PhasePoint, SamplerError> {
    let dim = model.dim();
    for _ in 0..INIT_TRIES {
        let q: Vec<f64> = match init {
            InitStrategy::Uniform(r) => (0..dim).map(|_| rng.random_range(-*r..=*r)).collect(),
            InitStrategy::Jitter { center, radius } => center
                .iter()
                .map(|c| c + rng.random_range(-*radius..=*radius))
                .collect(),
            InitStrategy::Fixed(points) => points[chain % points.len()].clone(),
        };
        let z = PhasePoint::at(model, q);
        if z.is_valid() {
            return Ok(z);
        }
        if matches!(init, InitStrategy::Fixed(_)) {
            break;
        }
    }
    Err(SamplerError::Init {
        chain,
        tries: INIT_TRIES,
    })
}

/// Runs one chain: warm-up with step size and metric adaptation, then
/// sampling with both frozen.
pub fn run_chain<M: LogDensity + ?Sized>(
    model: &M,
    init: &InitStrategy,
    config: &ChainConfig,
    chain: usize,
) -> Result<ChainRecord, SamplerError> {
    let mut rng = chain_rng(config.seed, chain);
    let mut z = find_start(model, init, chain, &mut rng)?;
    let n_warmup = config.n_warmup();
    let mut nuts = Nuts::new(model, config.max_tree_depth, rng);
    nuts.init_step_size(&z);
    let mut da = DualAveraging::new(config.target_acceptance);
    da.restart(nuts.step_size);
    let mut var = VarianceAdapter::new(model.dim(), n_warmup);

    let mut n_div_warm = 0;
    for _ in 0..n_warmup {
        let (next, st) = nuts.transition(&z);
        z = next;
        n_div_warm += st.divergent as usize;
        nuts.step_size = da.learn(st.accept_stat);
        if var.learn(&mut nuts.inv_metric, &z.q) {
            nuts.init_step_size(&z);
            da.restart(nuts.step_size);
        }
    }
    if n_warmup > 0 {
        nuts.step_size = da.final_step_size();
    }
    if !(nuts.step_size.is_normal() && nuts.step_size > 0.0) {
        return Err(SamplerError::StepSize {
            chain,
            step: nuts.step_size,
        });
    }

    let n_sampling = config.n_sampling();
    let mut stats = Vec::with_capacity(n_sampling);
    let mut draws = Vec::with_capacity(n_sampling / config.thin);
    for i in 0..n_sampling {
        let (next, st) = nuts.transition(&z);
        z = next;
        stats.push(st);
        if (i + 1) % config.thin == 0 {
            draws.push(z.q.clone());
        }
    }
    let n_divergent = stats.iter().filter(|s| s.divergent).count();
    if n_sampling > 0 && n_divergent == n_sampling {
        return Err(SamplerError::AllDivergent { chain });
    }
    if n_divergent as f64 > DIVERGENCE_WARN * n_sampling as f64 {
        log::warn!("chain {chain}: {n_divergent}/{n_sampling} divergent transitions");
    }
    Ok(ChainRecord {
        draws,
        stats,
        step_size: nuts.step_size,
        inv_metric: nuts.inv_metric.clone(),
        n_divergent,
        n_divergent_warmup: n_div_warm,
    })
}

/// Runs `config.n_chains` independent chains in parallel.
pub fn run_chains<M: LogDensity + ?Sized>(
    model: &M,
    names: &[String],
    init: &InitStrategy,
    config: &ChainConfig,
) -> Result<DrawStore, SamplerError> {
    config.validate()?;
    if names.len() != model.dim() {
        return Err(SamplerError::Config(format!(
            "{} names for a {}-dimensional target",
            names.len(),
            model.dim()
        )));
    }
    let chains: Result<Vec<ChainRecord>, SamplerError> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(model, init, config, c))
        .collect();
    Ok(DrawStore {
        names: names.to_vec(),
        config: config.clone(),
        chains: chains?,
    })
}

/// Generic coordinate names `x[0]`, `x[1]`, ….
pub fn default_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x[{i}]")).collect()
}

#[cfg(test)]
mod tests;
