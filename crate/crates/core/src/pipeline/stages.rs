use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::artifacts::{
    csv_writer, read_json, write_json, Audit, FitRecord, Manifest, SexAudit, StackingRow, StackingTable,
    StageRecord,
};
use super::config::{RunConfig, YearPlan};
use super::{PipelineError, Stage};
use crate::forecast::fan::{summarize_fan, FanBands, QuantileRule};
use crate::forecast::{e0_draws, holdback_coverage, predict_log_rates, qx_from_m, DrawRef, ModelDraws};
use crate::ingest::{align_dataset, read_audit_csv, read_hmd_file, MortalityDataset};
use crate::loo::{compare, psis_loo, stack_weights, stacked_draws, LooResult, HIGH_K};
use crate::model::{ModelSpec, MortalityModel};
use crate::sampler::{run_chains, ChainConfig, DrawStore, InitStrategy, RHAT_THRESHOLD};
use crate::synthetic::{generate, SyntheticConfig};

/// Bands written for the fitted components.
const COMPONENT_LEVELS: [f64; 2] = [0.5, 0.9];
/// Forecast years evaluated at once; bounds the size of a rate surface.
const YEAR_CHUNK: usize = 10;

/// A configured run bound to its output directory.
pub struct Pipeline {
    pub config: RunConfig,
    pub resume: bool,
    manifest: Manifest,
}

impl Pipeline {
    /// Validates the config and checks that the output directory is writable.
    /// An existing manifest from the same config is picked up; one from a
    /// different config is an error under `resume` and is replaced otherwise.
    pub fn new(config: RunConfig, resume: bool) -> Result<Self, PipelineError> {
        config.validate()?;
        check_writable(&config.output)?;
        let path = config.output.join("manifest.json");
        // the manifest lives in the output directory, so it records that as "."
        let recorded = RunConfig {
            output: PathBuf::from("."),
            ..config.clone()
        };
        let manifest = match path.exists().then(|| read_json::<Manifest>(&path)) {
            Some(Ok(old)) if old.config == recorded => old,
            Some(Ok(_)) if resume => {
                return Err(PipelineError::Config(format!(
                    "{} holds a run with a different configuration; use another output directory or drop --resume",
                    config.output.display()
                )))
            }
            Some(Err(e)) if resume => return Err(e),
            _ => Manifest::new(&recorded),
        };
        Ok(Self {
            config,
            resume,
            manifest,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn out(&self) -> &Path {
        &self.config.output
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.config.output.join(rel)
    }

    fn fit_dir(&self, x: u32) -> PathBuf {
        self.path(&format!("fits/x{x}"))
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        write_json(&self.path("manifest.json"), &self.manifest)
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<(), PipelineError> {
        for stage in Stage::ALL {
            self.run_stage(stage)?;
        }
        Ok(())
    }

    /// Runs one stage from the artifacts of the previous one. Rerunning a
    /// stage invalidates every later stage.
    pub fn run_stage(&mut self, stage: Stage) -> Result<(), PipelineError> {
        if self.resume && self.manifest.completed(stage) {
            if self.stage_outputs(stage).iter().all(|p| p.exists()) {
                info!("{stage}: complete, skipping");
                return Ok(());
            }
            info!("{stage}: outputs missing, rerunning");
        }
        if let Some(prev) = Stage::ALL.iter().rev().find(|&&s| s < stage) {
            if !self.manifest.completed(*prev) {
                return Err(PipelineError::Missing {
                    stage,
                    missing: format!("the outputs of `{prev}`"),
                    stage_needed: *prev,
                });
            }
        }
        info!("{stage}: starting");
        let t = Instant::now();
        self.manifest.stages.retain(|&s, _| s < stage);
        match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Fit => self.fit()?,
            Stage::Loo => self.loo()?,
            Stage::Stack => self.stack()?,
            Stage::Forecast => self.forecast()?,
            Stage::Assess => self.assess()?,
        }
        let wall = t.elapsed().as_secs_f64();
        info!("{stage}: done in {wall:.1}s");
        self.manifest.stages.insert(
            stage,
            StageRecord {
                completed: true,
                wall_seconds: wall,
            },
        );
        self.save_manifest()
    }

    /// Files whose absence makes a completed stage run again under resume.
    fn stage_outputs(&self, stage: Stage) -> Vec<PathBuf> {
        let per_x = |f: &dyn Fn(u32) -> PathBuf| self.config.menu.iter().map(|&x| f(x)).collect();
        match stage {
            Stage::Ingest => vec![self.path("audit.json")],
            Stage::Fit => per_x(&|x| self.fit_dir(x).join("draws.json")),
            Stage::Loo => per_x(&|x| self.path(&format!("loo/x{x}.json"))),
            Stage::Stack => vec![self.path("stacking.json"), self.path("weights.csv")],
            Stage::Forecast => ["stacked_draws", "fan_log_m", "fan_q", "fan_e0", "e0_draws"]
                .iter()
                .map(|f| self.path(&format!("forecast/{f}.csv")))
                .collect(),
            Stage::Assess => match self.manifest.years.and_then(|p| p.holdback) {
                Some(_) => vec![self.path("assess/coverage.json")],
                None => Vec::new(),
            },
        }
    }

    fn ingest(&mut self) -> Result<(), PipelineError> {
        let cfg = &self.config;
        let (full, source) = match (&cfg.data, &cfg.synthetic) {
            (Some(d), _) => {
                let deaths = read_hmd_file(&d.deaths)?;
                let exposures = read_hmd_file(&d.exposures)?;
                let (dy, ey) = (deaths.years(), exposures.years());
                let years = *dy.start().max(ey.start())..=*dy.end().min(ey.end());
                let sets = cfg
                    .sexes()
                    .into_iter()
                    .map(|s| {
                        let mut ds = align_dataset(&deaths, &exposures, s, years.clone())?.restrict_ages(d.max_age)?;
                        ds.exclude_oldest_cohorts(d.exclude_oldest_cohorts)?;
                        Ok(ds)
                    })
                    .collect::<Result<Vec<_>, PipelineError>>()?;
                (sets, format!("{} / {}", d.deaths.display(), d.exposures.display()))
            }
            (None, Some(syn)) => {
                let syn = SyntheticConfig {
                    sex_mode: cfg.sex_mode,
                    ..syn.clone()
                };
                (generate(&syn)?.datasets, format!("synthetic (seed {})", syn.seed))
            }
            (None, None) => unreachable!("validated"),
        };
        let years = (full[0].years[0], *full[0].years.last().unwrap());
        let plan = YearPlan::resolve(cfg, years)?;
        let window = plan.fit.0..=plan.holdback.map_or(plan.fit.1, |h| h.1);
        fs::create_dir_all(self.path("data"))?;
        let mut sexes = Vec::new();
        for ds in &full {
            let ds = ds.restrict_years(window.clone())?;
            ds.write_audit_csv(csv_file(&self.path(&format!("data/{}.csv", ds.sex)))?)?;
            let fit = ds.restrict_years(plan.fit.0..=plan.fit.1)?;
            sexes.push(SexAudit {
                sex: ds.sex,
                ages: (ds.ages[0], *ds.ages.last().unwrap()),
                years: (*window.start(), *window.end()),
                n_cells: ds.deaths.len(),
                n_included: ds.n_included(),
                n_zero_deaths: (0..ds.deaths.len()).filter(|&i| ds.included[i] && ds.deaths[i] == 0.0).count(),
                included_cohorts: fit.included_cohort_range().map(|r| (*r.start(), *r.end())),
            });
        }
        write_json(
            &self.path("audit.json"),
            &Audit {
                source,
                plan,
                sexes,
            },
        )?;
        self.manifest.years = Some(plan);
        self.manifest.fits.clear();
        Ok(())
    }

    /// Year plan and full-window datasets written by `ingest`.
    pub fn load_data(&self) -> Result<(YearPlan, Vec<MortalityDataset>), PipelineError> {
        let audit: Audit = read_json(&self.path("audit.json"))?;
        let sets = audit
            .sexes
            .iter()
            .map(|s| Ok(read_audit_csv(csv_file_in(&self.path(&format!("data/{}.csv", s.sex)))?)?))
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok((audit.plan, sets))
    }

    /// The model for one transition age, compiled against the fitted years.
    pub fn build_model(&self, x_old: u32) -> Result<MortalityModel, PipelineError> {
        let (plan, sets) = self.load_data()?;
        let fit: Vec<MortalityDataset> = sets
            .iter()
            .map(|d| d.restrict_years(plan.fit.0..=plan.fit.1))
            .collect::<Result<_, _>>()?;
        let spec = ModelSpec::for_dataset(&fit[0], x_old, self.config.horizon, self.config.sex_mode);
        Ok(MortalityModel::new(spec, &fit)?)
    }

    fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            seed: self.manifest.seeds.chains,
            ..self.config.chains.clone()
        }
    }

    fn fit(&mut self) -> Result<(), PipelineError> {
        // compile every model first so a bad menu entry fails before any sampling
        let models: Vec<(u32, MortalityModel)> = self
            .config
            .menu
            .iter()
            .map(|&x| Ok((x, self.build_model(x)?)))
            .collect::<Result<_, PipelineError>>()?;
        let todo: Vec<&(u32, MortalityModel)> = models
            .iter()
            .filter(|(x, _)| {
                let done = self.resume
                    && self.manifest.fits.contains_key(x)
                    && self.fit_dir(*x).join("draws.json").exists();
                if done {
                    info!("fit: x_old = {x} already sampled, skipping");
                }
                !done
            })
            .collect();
        if !self.resume {
            self.manifest.fits.clear();
        }
        if self.config.parallel_menu {
            let records: Vec<FitRecord> = todo
                .par_iter()
                .map(|(x, m)| self.fit_one(*x, m))
                .collect::<Result<_, _>>()?;
            for r in records {
                self.manifest.fits.insert(r.x_old, r);
            }
        } else {
            for (x, m) in todo {
                let r = self.fit_one(*x, m)?;
                self.manifest.fits.insert(*x, r);
                self.save_manifest()?;
            }
        }
        Ok(())
    }

    fn fit_one(&self, x: u32, model: &MortalityModel) -> Result<FitRecord, PipelineError> {
        let t = Instant::now();
        let dir = self.fit_dir(x);
        fs::create_dir_all(&dir)?;
        info!("fit: x_old = {x}, {} parameters, {} cells", model.dim(), model.n_cells());
        let store = run_chains(
            model,
            model.parameter_names(),
            &InitStrategy::Uniform(self.config.init_radius),
            &self.chain_config(),
        )
        .map_err(|source| PipelineError::Fit { x_old: x, source })?;
        store.write(&dir, "draws")?;
        let report = store.report();
        for w in &report.warnings {
            warn!("fit: x_old = {x}: {w}");
        }
        if let Ok(diag) = store.diagnostics() {
            let mut w = csv_writer(&dir.join("diagnostics.csv"))?;
            w.write_record(["parameter", "mean", "sd", "rhat", "ess"])?;
            for d in diag {
                w.write_record([
                    d.name,
                    d.mean.to_string(),
                    d.sd.to_string(),
                    opt(d.rhat),
                    opt(d.ess),
                ])?;
            }
            w.flush()?;
        }
        write_components(model, &store.merged(), &dir.join("components.csv"))?;
        Ok(FitRecord {
            x_old: x,
            rhat_max: report.rhat_max,
            ess_min: report.ess_min,
            divergence_rate: report.divergence_rate,
            n_high_rhat: report.high_rhat.len(),
            wall_seconds: t.elapsed().as_secs_f64(),
        })
    }

    fn loo(&mut self) -> Result<(), PipelineError> {
        fs::create_dir_all(self.path("loo"))?;
        let mut w = csv_writer(&self.path("loo/pareto_k.csv"))?;
        w.write_record(["x_old", "sex", "age", "year", "elpd", "pareto_k"])?;
        for &x in &self.config.menu {
            let model = self.build_model(x)?;
            let draws = DrawStore::read(&self.fit_dir(x), "draws")?.merged();
            let res = psis_loo(&model.pointwise_loglik(&draws))?;
            info!(
                "loo: x_old = {x}: elpd {:.1} (se {:.1}), {} cells with k > {HIGH_K}",
                res.elpd_total,
                res.se_elpd(),
                res.n_high_k
            );
            if !res.excluded.is_empty() {
                warn!("loo: x_old = {x}: {} cells with non-finite log-likelihood excluded", res.excluded.len());
            }
            let ids = model.cell_ids();
            for (j, &c) in res.cells.iter().enumerate() {
                let id = ids[c];
                w.write_record([
                    x.to_string(),
                    id.sex.to_string(),
                    id.age.to_string(),
                    id.year.to_string(),
                    res.elpd_pointwise[j].to_string(),
                    res.pareto_k[j].to_string(),
                ])?;
            }
            write_json(&self.path(&format!("loo/x{x}.json")), &res)?;
        }
        w.flush()?;
        Ok(())
    }

    fn stack(&mut self) -> Result<(), PipelineError> {
        let menu = self.config.menu.clone();
        let results: Vec<LooResult> = menu
            .iter()
            .map(|x| read_json(&self.path(&format!("loo/x{x}.json"))))
            .collect::<Result<_, _>>()?;
        let common: Vec<usize> = results[0]
            .cells
            .iter()
            .copied()
            .filter(|c| results.iter().all(|r| r.cells.binary_search(c).is_ok()))
            .collect();
        let all_cells = results.iter().flat_map(|r| r.cells.iter().chain(&r.excluded)).max().map_or(0, |m| m + 1);
        let restricted: Vec<LooResult> = results.iter().map(|r| restrict(r, &common)).collect();
        let lpd: Vec<Vec<f64>> = restricted.iter().map(|r| r.elpd_pointwise.clone()).collect();
        let weights = stack_weights(&lpd)?;
        if !weights.converged {
            warn!("stack: weights did not converge in {} iterations", weights.iterations);
        }
        let ids: Vec<String> = menu.iter().map(|x| x.to_string()).collect();
        let rows = compare(&ids, &restricted, Some(&weights.weights))?
            .into_iter()
            .map(|loo| {
                let x: u32 = loo.model.parse().expect("menu ids are ages");
                let fit = self.manifest.fits.get(&x);
                let rhat_max = fit.and_then(|f| f.rhat_max);
                StackingRow {
                    x_old: x,
                    loo,
                    rhat_max,
                    high_rhat: rhat_max.is_some_and(|r| r > RHAT_THRESHOLD),
                    divergence_rate: fit.map_or(f64::NAN, |f| f.divergence_rate),
                }
            })
            .collect::<Vec<_>>();
        for r in rows.iter().filter(|r| r.high_rhat) {
            warn!("stack: x_old = {} has R-hat {:?} > {RHAT_THRESHOLD}", r.x_old, r.rhat_max);
        }
        let table = StackingTable {
            menu: menu.clone(),
            n_cells: common.len(),
            n_cells_excluded: all_cells - common.len(),
            weights,
            rows,
        };
        let mut w = csv_writer(&self.path("weights.csv"))?;
        w.write_record(["x_old", "weight", "elpd", "se", "n_high_k", "high_rhat"])?;
        for r in &table.rows {
            w.write_record([
                r.x_old.to_string(),
                table.weight_of(r.x_old).unwrap_or(0.0).to_string(),
                r.loo.elpd.to_string(),
                r.loo.se.to_string(),
                r.loo.n_high_k.to_string(),
                r.high_rhat.to_string(),
            ])?;
        }
        w.flush()?;
        write_json(&self.path("stacking.json"), &table)
    }

    /// Models, their merged draws and the stacked picks.
    fn stacked_sources(&self) -> Result<(Vec<MortalityModel>, Vec<Vec<Vec<f64>>>), PipelineError> {
        let mut models = Vec::new();
        let mut draws = Vec::new();
        for &x in &self.config.menu {
            models.push(self.build_model(x)?);
            draws.push(DrawStore::read(&self.fit_dir(x), "draws")?.merged());
        }
        Ok((models, draws))
    }

    fn read_picks(&self) -> Result<Vec<DrawRef>, PipelineError> {
        let mut r = csv::Reader::from_reader(csv_file_in(&self.path("forecast/stacked_draws.csv"))?);
        let mut picks = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let x: u32 = rec[1].parse().map_err(|_| PipelineError::Config("bad stacked_draws.csv".into()))?;
            let source = self
                .config
                .menu
                .iter()
                .position(|&m| m == x)
                .ok_or_else(|| PipelineError::Config(format!("stacked draw from x_old = {x} outside the menu")))?;
            let index = rec[2].parse().map_err(|_| PipelineError::Config("bad stacked_draws.csv".into()))?;
            picks.push(DrawRef { source, index });
        }
        Ok(picks)
    }

    fn forecast(&mut self) -> Result<(), PipelineError> {
        let table: StackingTable = read_json(&self.path("stacking.json"))?;
        let (plan, _) = self.load_data()?;
        let (models, draws) = self.stacked_sources()?;
        let available: Vec<usize> = draws.iter().map(|d| d.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.manifest.seeds.stacking);
        let picks = stacked_draws(
            &available,
            &table.weights.weights,
            self.config.stacked_draws,
            self.config.stack_mode,
            &mut rng,
        )?;
        fs::create_dir_all(self.path("forecast"))?;
        let menu = &self.config.menu;
        let mut w = csv_writer(&self.path("forecast/stacked_draws.csv"))?;
        w.write_record(["draw", "x_old", "index"])?;
        for (j, p) in picks.iter().enumerate() {
            w.write_record([j.to_string(), menu[p.source].to_string(), p.index.to_string()])?;
        }
        w.flush()?;

        let sources: Vec<ModelDraws> = models
            .iter()
            .zip(&draws)
            .map(|(model, d)| ModelDraws { model, draws: d })
            .collect();
        let levels = &self.config.fan_levels;
        let rule = QuantileRule::default();
        let fan_header = ["sex", "age", "year", "level", "median", "lower", "upper"];
        let mut w_m = csv_writer(&self.path("forecast/fan_log_m.csv"))?;
        let mut w_q = csv_writer(&self.path("forecast/fan_q.csv"))?;
        let mut w_e = csv_writer(&self.path("forecast/fan_e0.csv"))?;
        let mut w_d = csv_writer(&self.path("forecast/e0_draws.csv"))?;
        w_m.write_record(fan_header)?;
        w_q.write_record(fan_header)?;
        w_e.write_record(["sex", "year", "level", "median", "lower", "upper"])?;
        w_d.write_record(["draw", "x_old", "sex", "year", "e0"])?;
        let years = plan.forecast_years(self.config.horizon);
        for chunk in years.chunks(YEAR_CHUNK) {
            let surf = predict_log_rates(&sources, &picks, chunk, self.manifest.seeds.forecast)?;
            for (s, sex) in surf.sexes.iter().enumerate() {
                for (a, age) in surf.ages.iter().enumerate() {
                    for (y, year) in chunk.iter().enumerate() {
                        let cell = surf.cell(s, a, y);
                        let key = [sex.to_string(), age.to_string(), year.to_string()];
                        write_fan(&mut w_m, &key, &summarize_fan(&cell, levels, rule))?;
                        let q: Vec<f64> = cell.iter().map(|v| qx_from_m(v.exp())).collect();
                        write_fan(&mut w_q, &key, &summarize_fan(&q, levels, rule))?;
                    }
                }
                for (y, year) in chunk.iter().enumerate() {
                    let e0 = e0_draws(&surf, s, y)?;
                    write_fan(&mut w_e, &[sex.to_string(), year.to_string()], &summarize_fan(&e0, levels, rule))?;
                    for (j, v) in e0.iter().enumerate() {
                        w_d.write_record([
                            j.to_string(),
                            menu[picks[j].source].to_string(),
                            sex.to_string(),
                            year.to_string(),
                            v.to_string(),
                        ])?;
                    }
                }
            }
        }
        for w in [&mut w_m, &mut w_q, &mut w_e, &mut w_d] {
            w.flush()?;
        }
        Ok(())
    }

    fn assess(&mut self) -> Result<(), PipelineError> {
        let (plan, sets) = self.load_data()?;
        let Some((h0, h1)) = plan.holdback else {
            info!("assess: no hold-back window configured, nothing to score");
            return Ok(());
        };
        let (models, draws) = self.stacked_sources()?;
        let picks = self.read_picks()?;
        let sources: Vec<ModelDraws> = models
            .iter()
            .zip(&draws)
            .map(|(model, d)| ModelDraws { model, draws: d })
            .collect();
        let years: Vec<i32> = (h0..=h1).collect();
        let surf = predict_log_rates(&sources, &picks, &years, self.manifest.seeds.forecast)?;
        let observed: Vec<MortalityDataset> = sets
            .iter()
            .map(|d| d.restrict_years(h0..=h1))
            .collect::<Result<_, _>>()?;
        let pred = surf.predictive(|s, a, y| observed[s].exposure_at(a, y), self.manifest.seeds.predictive);
        let report = holdback_coverage(&pred, &observed, self.config.coverage_level, self.config.coverage_band)?;
        info!(
            "assess: {:.1}% of {} held-back cells inside the central {:.0}% interval",
            100.0 * report.coverage,
            report.n_cells,
            100.0 * report.level
        );
        fs::create_dir_all(self.path("assess"))?;
        for (name, cells) in [("by_year", &report.by_year), ("by_age_band", &report.by_age_band)] {
            let mut w = csv_writer(&self.path(&format!("assess/coverage_{name}.csv")))?;
            w.write_record(["sex", "group", "n", "inside", "fraction"])?;
            for c in cells {
                w.write_record([
                    c.sex.to_string(),
                    c.group.clone(),
                    c.n.to_string(),
                    c.inside.to_string(),
                    c.fraction.to_string(),
                ])?;
            }
            w.flush()?;
        }
        write_json(&self.path("assess/coverage.json"), &report)
    }
}

fn check_writable(dir: &Path) -> Result<(), PipelineError> {
    let fail = |e: std::io::Error| PipelineError::Output {
        path: dir.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".mortcast-write-probe");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

fn csv_file(path: &Path) -> Result<std::io::BufWriter<fs::File>, PipelineError> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

fn csv_file_in(path: &Path) -> Result<std::io::BufReader<fs::File>, PipelineError> {
    Ok(std::io::BufReader::new(fs::File::open(path)?))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn write_fan<W: std::io::Write>(w: &mut csv::Writer<W>, key: &[String], fan: &FanBands) -> Result<(), PipelineError> {
    for (i, l) in fan.levels.iter().enumerate() {
        let mut row: Vec<String> = key.to_vec();
        row.extend([l.to_string(), fan.median.to_string(), fan.lower[i].to_string(), fan.upper[i].to_string()]);
        w.write_record(&row)?;
    }
    Ok(())
}

/// Pointwise LOO restricted to `cells` (a subset of `r.cells`).
fn restrict(r: &LooResult, cells: &[usize]) -> LooResult {
    let pos: Vec<usize> = cells
        .iter()
        .map(|c| r.cells.binary_search(c).expect("subset"))
        .collect();
    let elpd_pointwise: Vec<f64> = pos.iter().map(|&j| r.elpd_pointwise[j]).collect();
    let pareto_k: Vec<f64> = pos.iter().map(|&j| r.pareto_k[j]).collect();
    let degenerate: Vec<usize> = r.degenerate.iter().copied().filter(|c| cells.binary_search(c).is_ok()).collect();
    let n_high_k = cells
        .iter()
        .zip(&pareto_k)
        .filter(|(c, &k)| k > HIGH_K && degenerate.binary_search(c).is_err())
        .count();
    LooResult {
        elpd_total: elpd_pointwise.iter().sum(),
        elpd_pointwise,
        pareto_k,
        n_high_k,
        cells: cells.to_vec(),
        excluded: Vec::new(),
        degenerate,
    }
}

/// Posterior medians and central bands of `s_α`, `s_β` (GAM ages), `s_γ`
/// (fitted cohorts) and `κ` (fitted years).
fn write_components(model: &MortalityModel, draws: &[Vec<f64>], path: &Path) -> Result<(), PipelineError> {
    let comps: Vec<_> = draws.par_iter().map(|th| model.components(th)).collect();
    let mut w = csv_writer(path)?;
    let mut header = vec!["sex".to_string(), "component".to_string(), "index".to_string(), "median".to_string()];
    for l in COMPONENT_LEVELS {
        let pct = (100.0 * l).round();
        header.push(format!("lower_{pct}"));
        header.push(format!("upper_{pct}"));
    }
    w.write_record(&header)?;
    let rule = QuantileRule::default();
    for (s, sex) in model.sexes.iter().enumerate() {
        let mut emit = |name: &str, index: String, values: Vec<f64>| -> Result<(), PipelineError> {
            let f = summarize_fan(&values, &COMPONENT_LEVELS, rule);
            let mut row = vec![sex.to_string(), name.to_string(), index, f.median.to_string()];
            for i in 0..COMPONENT_LEVELS.len() {
                row.push(f.lower[i].to_string());
                row.push(f.upper[i].to_string());
            }
            w.write_record(&row)?;
            Ok(())
        };
        for age in 1..model.spec.x_old {
            let sm: Vec<(f64, f64)> = comps.iter().map(|c| model.gam_smooths(&c.sexes[s], age)).collect();
            emit("s_alpha", age.to_string(), sm.iter().map(|v| v.0).collect())?;
            emit("s_beta", age.to_string(), sm.iter().map(|v| v.1).collect())?;
        }
        for cohort in model.first_cohort..=model.last_cohort {
            let v = comps.iter().map(|c| model.cohort_effect(&c.sexes[s].cohort_coef, cohort)).collect();
            emit("s_gamma", cohort.to_string(), v)?;
        }
        for (t, year) in model.years().iter().enumerate() {
            emit("kappa", year.to_string(), comps.iter().map(|c| c.sexes[s].kappa[t]).collect())?;
        }
    }
    w.flush()?;
    Ok(())
}
