//! Pipeline stages behind the CLI: each one reads its declared inputs, writes
//! its outputs through a quarantine directory, and records a manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cofindiff_core::condition::StandardizationStats;
use cofindiff_core::metrics::{
    condition_mae, diversity_report, stylized_fact_report, ConditionGrid,
    ConditionScatterPoint, DiversityReport, StylizedFactReport,
};
use cofindiff_core::sim::{simulate_garch, simulate_gbm, GarchParams, GbmParams};
use cofindiff_core::ConditionPair;

use crate::baselines::{self, train_cgan, GanModel};
use crate::config::RunConfig;
use crate::diffusion::{train_diffusion, DiffusionModel, GeneratedSeries};
use crate::error::{AppError, Result};
use crate::hedging::{
    evaluate_hedger, simulate_hedge, simulate_hedge_net_batch, train_hedger, HedgeReport,
    HedgerModel, OptionSpec, Policy, RiskParams,
};
use crate::market_data::{
    build_dataset, forward_fill_and_slice, load_price_csv, standardize, DatasetManifest,
    DatasetSplit, DaySeries, SplitSpec,
};
use crate::tensor::sample_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    FitDiffusion,
    FitGan,
    Generate,
    EvalStylized,
    EvalConditions,
    EvalDiversity,
    HedgeTrain,
    HedgeEval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::FitDiffusion,
        Stage::FitGan,
        Stage::Generate,
        Stage::EvalStylized,
        Stage::EvalConditions,
        Stage::EvalDiversity,
        Stage::HedgeTrain,
        Stage::HedgeEval,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::FitDiffusion => "fit-diffusion",
            Stage::FitGan => "fit-gan",
            Stage::Generate => "generate",
            Stage::EvalStylized => "eval-stylized",
            Stage::EvalConditions => "eval-conditions",
            Stage::EvalDiversity => "eval-diversity",
            Stage::HedgeTrain => "hedge-train",
            Stage::HedgeEval => "hedge-eval",
            Stage::Report => "report",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }
}

/// Record of one completed stage run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: u64,
    pub elapsed_secs: f64,
    pub config: RunConfig,
    /// SHA-256 of each input file consumed.
    pub input_hashes: BTreeMap<String, String>,
    pub outputs: Vec<PathBuf>,
}

/// Dataset artifact written by ingest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetFile {
    pub stats: StandardizationStats,
    pub split: DatasetSplit,
}

pub fn dataset_path(out: &Path) -> PathBuf {
    out.join("dataset").join("dataset.json")
}

pub fn diffusion_dir(out: &Path) -> PathBuf {
    out.join("diffusion")
}

pub fn gan_dir(out: &Path) -> PathBuf {
    out.join("gan")
}

pub fn generated_dir(out: &Path, model: &str) -> PathBuf {
    out.join("generated").join(model)
}

pub fn eval_path(out: &Path, name: &str) -> PathBuf {
    out.join("eval").join(name)
}

pub fn hedger_dir(out: &Path) -> PathBuf {
    out.join("hedger")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::Other(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, producer: &str) -> Result<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(AppError::MissingUpstream {
                path: path.to_path_buf(),
                producer: producer.to_string(),
            })
        }
        Err(e) => return Err(AppError::io(path, e)),
    };
    serde_json::from_str(&text)
        .map_err(|e| AppError::Corrupt(format!("{}: {e}", path.display())))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collector for manifest bookkeeping and quarantined output moves.
struct StageRun {
    stage: Stage,
    started: Instant,
    seed: u64,
    config: RunConfig,
    input_hashes: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
    tmp_dir: PathBuf,
}

impl StageRun {
    fn begin(stage: Stage, cfg: &RunConfig) -> Result<Self> {
        let tmp_dir = cfg.out_dir.join(format!(".tmp-{}", stage.name()));
        if tmp_dir.exists() {
            std::fs::remove_dir_all(&tmp_dir).map_err(|e| AppError::io(&tmp_dir, e))?;
        }
        std::fs::create_dir_all(&tmp_dir).map_err(|e| AppError::io(&tmp_dir, e))?;
        Ok(Self {
            stage,
            started: Instant::now(),
            seed: cfg.seed,
            config: cfg.clone(),
            input_hashes: BTreeMap::new(),
            outputs: Vec::new(),
            tmp_dir,
        })
    }

    fn record_input(&mut self, path: &Path) -> Result<()> {
        self.input_hashes
            .insert(path.display().to_string(), hash_file(path)?);
        Ok(())
    }

    /// Path inside the quarantine directory for a to-be-committed output.
    fn staging(&self, rel: &str) -> PathBuf {
        self.tmp_dir.join(rel)
    }

    /// Move a staged file or directory to its final location.
    fn commit(&mut self, rel: &str, dest: &Path) -> Result<()> {
        let src = self.staging(rel);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        if dest.exists() {
            if dest.is_dir() {
                std::fs::remove_dir_all(dest).map_err(|e| AppError::io(dest, e))?;
            } else {
                std::fs::remove_file(dest).map_err(|e| AppError::io(dest, e))?;
            }
        }
        std::fs::rename(&src, dest).map_err(|e| AppError::io(dest, e))?;
        self.outputs.push(dest.to_path_buf());
        Ok(())
    }

    fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            stage: self.stage.name().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            elapsed_secs: self.started.elapsed().as_secs_f64(),
            config: self.config.clone(),
            input_hashes: self.input_hashes,
            outputs: self.outputs,
        };
        let path = self
            .config
            .out_dir
            .join("manifests")
            .join(format!("{}.json", self.stage.name()));
        write_json(&path, &manifest)?;
        let _ = std::fs::remove_dir_all(&self.tmp_dir);
        Ok(manifest)
    }
}

/// Dispatch a stage by name.
pub fn run_stage(stage: Stage, cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    match stage {
        Stage::Ingest => ingest(cfg),
        Stage::FitDiffusion => fit_diffusion(cfg),
        Stage::FitGan => fit_gan(cfg),
        Stage::Generate => generate(cfg),
        Stage::EvalStylized => eval_stylized(cfg),
        Stage::EvalConditions => eval_conditions(cfg),
        Stage::EvalDiversity => eval_diversity(cfg),
        Stage::HedgeTrain => hedge_train(cfg),
        Stage::HedgeEval => hedge_eval(cfg),
        Stage::Report => report(cfg),
    }
}

/// Build a synthetic GARCH corpus of `days` day series with sequential dates.
pub fn synth_corpus(cfg: &RunConfig) -> Result<Vec<DaySeries>> {
    let s = &cfg.data.synth;
    let params = GarchParams::new(s.omega, s.lambda, s.nu)?;
    let steps = cfg.data.session.points - 1;
    let base = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    (0..s.days)
        .map(|i| {
            let mut rng = sample_rng(cfg.seed ^ 0x5317, i as u64);
            let scaled = simulate_garch(&params, steps, &mut rng)?;
            let mut prices = vec![100.0f64];
            for r in &scaled {
                let last = *prices.last().unwrap();
                prices.push(last * (r / 100.0).exp());
            }
            Ok(DaySeries::from_prices(
                "SYNTH".to_string(),
                base + chrono::Days::new(i as u64),
                prices,
            ))
        })
        .collect()
}

fn synth_split_spec(days: &[DaySeries], cfg: &RunConfig) -> SplitSpec {
    let s = &cfg.data.synth;
    let n = days.len();
    let n_test = ((s.test_fraction * n as f64).round() as usize).min(n);
    let n_val = ((s.val_fraction * n as f64).round() as usize).min(n - n_test);
    let n_train = n - n_val - n_test;
    let d = |i: usize| days[i].date;
    SplitSpec {
        train: (d(0), d(n_train.saturating_sub(1))),
        val: (d(n_train), d(n_train + n_val - 1)),
        test: (d(n_train + n_val), d(n - 1)),
    }
}

fn ingest(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::Ingest, cfg)?;
    let (days, spec) = match &cfg.data.source {
        Some(path) => {
            run.record_input(path)?;
            let (bars, errors) = load_price_csv(path, &cfg.data.columns)?;
            for e in &errors {
                log::warn!("ingest: {}", e.message);
            }
            let days = forward_fill_and_slice(&bars, &cfg.data.session);
            let spec = cfg.data.split.ok_or_else(|| {
                AppError::Validation(vec![
                    "data.split date ranges are required for CSV ingestion".to_string(),
                ])
            })?;
            (days, spec)
        }
        None => {
            let days = synth_corpus(cfg)?;
            let spec = cfg.data.split.unwrap_or_else(|| synth_split_spec(&days, cfg));
            (days, spec)
        }
    };
    if days.is_empty() {
        return Err(AppError::Validation(vec![
            "no usable trading days after ingestion".to_string(),
        ]));
    }
    let split = build_dataset(days, &spec, &cfg.data.upsample)?;
    if split.train.is_empty() {
        return Err(AppError::Validation(vec![
            "training split is empty".to_string(),
        ]));
    }
    let stats = standardize(
        &split
            .train
            .iter()
            .map(|e| e.day.clone())
            .collect::<Vec<_>>(),
    )?;
    let manifest = DatasetManifest::from_split(&split, stats);
    write_json(&run.staging("dataset.json"), &DatasetFile { stats, split })?;
    write_json(&run.staging("manifest.json"), &manifest)?;
    run.commit("dataset.json", &dataset_path(&cfg.out_dir))?;
    run.commit(
        "manifest.json",
        &cfg.out_dir.join("dataset").join("manifest.json"),
    )?;
    run.finish()
}

fn load_dataset(run: &mut StageRun, cfg: &RunConfig) -> Result<DatasetFile> {
    let path = dataset_path(&cfg.out_dir);
    let data: DatasetFile = read_json(&path, "ingest")?;
    run.record_input(&path)?;
    Ok(data)
}

fn fit_diffusion(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::FitDiffusion, cfg)?;
    let data = load_dataset(&mut run, cfg)?;
    let (model, report) = train_diffusion(&data.split, &cfg.diffusion, cfg.seed)?;
    let stage_dir = run.staging("checkpoint");
    model.save(&stage_dir, cfg.seed)?;
    write_json(&run.staging("train_report.json"), &report)?;
    run.commit("checkpoint", &diffusion_dir(&cfg.out_dir))?;
    run.commit(
        "train_report.json",
        &cfg.out_dir.join("diffusion_train_report.json"),
    )?;
    run.finish()
}

fn fit_gan(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::FitGan, cfg)?;
    let data = load_dataset(&mut run, cfg)?;
    let (model, report) = train_cgan(
        &data.split,
        &cfg.baselines.gan,
        &cfg.baselines.gan_train,
        cfg.seed,
    )?;
    model.save(&run.staging("checkpoint"), cfg.seed)?;
    write_json(&run.staging("train_report.json"), &report)?;
    run.commit("checkpoint", &gan_dir(&cfg.out_dir))?;
    run.commit(
        "train_report.json",
        &cfg.out_dir.join("gan_train_report.json"),
    )?;
    run.finish()
}

fn grid(cfg: &RunConfig) -> ConditionGrid {
    let m = &cfg.metrics;
    let axis = |lo: f64, hi: f64, step: f64| {
        let mut out = Vec::new();
        let mut x = lo;
        while x <= hi + 1e-9 {
            out.push(x);
            x += step;
        }
        out
    };
    ConditionGrid {
        trends: axis(m.trend_min, m.trend_max, m.trend_step),
        rvs: axis(m.rv_min, m.rv_max, m.rv_step),
    }
}

/// Generated output: one file pair per model under generated/<model>/.
fn write_generated(
    run: &mut StageRun,
    model_name: &str,
    out_dir: &Path,
    series: &[GeneratedSeries],
) -> Result<()> {
    let rel_csv = format!("{model_name}-series.csv");
    let rel_json = format!("{model_name}-conditions.json");
    let csv_path = run.staging(&rel_csv);
    let mut f = std::fs::File::create(&csv_path).map_err(|e| AppError::io(&csv_path, e))?;
    let t = series.first().map(|s| s.returns.len()).unwrap_or(0);
    let header: Vec<String> = ["trend_req", "rv_req"]
        .iter()
        .map(|s| s.to_string())
        .chain((1..=t).map(|i| format!("r{i}")))
        .collect();
    writeln!(f, "{}", header.join(",")).map_err(|e| AppError::io(&csv_path, e))?;
    for s in series {
        let row: Vec<String> = [s.requested.trend, s.requested.rv]
            .iter()
            .copied()
            .chain(s.returns.iter().copied())
            .map(|v| format!("{v}"))
            .collect();
        writeln!(f, "{}", row.join(",")).map_err(|e| AppError::io(&csv_path, e))?;
    }
    let points: Vec<ConditionScatterPoint> = series
        .iter()
        .map(|s| ConditionScatterPoint {
            requested: s.requested,
            realized: s.realized,
        })
        .collect();
    write_json(&run.staging(&rel_json), &points)?;
    run.commit(&rel_csv, &generated_dir(out_dir, model_name).join("series.csv"))?;
    run.commit(
        &rel_json,
        &generated_dir(out_dir, model_name).join("conditions.json"),
    )?;
    Ok(())
}

fn generate(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::Generate, cfg)?;
    let ddir = diffusion_dir(&cfg.out_dir);
    let model = DiffusionModel::load(&ddir)?;
    run.record_input(&crate::checkpoint::weights_path(&ddir))?;
    let points = grid(cfg).points();
    let mut all = Vec::new();
    for (i, cond) in points.iter().enumerate() {
        let series = model.generate_series(
            *cond,
            cfg.diffusion.guidance_gamma,
            cfg.metrics.samples_per_condition,
            cfg.seed.wrapping_add(1000 + i as u64),
        )?;
        all.extend(series);
    }
    write_generated(&mut run, "diffusion", &cfg.out_dir, &all)?;

    let gdir = gan_dir(&cfg.out_dir);
    if gdir.join(crate::checkpoint::META_FILE).exists() {
        let gan = GanModel::load(&gdir)?;
        run.record_input(&crate::checkpoint::weights_path(&gdir))?;
        let mut gan_all = Vec::new();
        for (i, cond) in points.iter().enumerate() {
            gan_all.extend(gan.generate_series(
                *cond,
                cfg.metrics.samples_per_condition,
                cfg.seed.wrapping_add(2000 + i as u64),
            )?);
        }
        write_generated(&mut run, "gan", &cfg.out_dir, &gan_all)?;
    }
    run.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StylizedEval {
    pub models: BTreeMap<String, StylizedFactReport>,
}

fn read_generated_returns(out: &Path, model: &str) -> Result<Option<Vec<Vec<f64>>>> {
    let path = generated_dir(out, model).join("series.csv");
    if !path.exists() {
        return Ok(None);
    }
    let mut reader =
        csv::Reader::from_path(&path).map_err(|e| AppError::Csv(e.to_string()))?;
    let mut out_rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AppError::Csv(e.to_string()))?;
        let returns: std::result::Result<Vec<f64>, _> =
            record.iter().skip(2).map(|v| v.parse::<f64>()).collect();
        out_rows.push(returns.map_err(|e| AppError::Csv(format!("{}: {e}", path.display())))?);
    }
    Ok(Some(out_rows))
}

fn eval_stylized(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::EvalStylized, cfg)?;
    let mut models = BTreeMap::new();
    models.insert(
        "gbm".to_string(),
        stylized_fact_report(&baselines::gbm_days_from_config(
            &cfg.baselines,
            cfg.seed ^ 0x6b31,
        )?)?,
    );
    models.insert(
        "garch".to_string(),
        stylized_fact_report(&baselines::garch_days_from_config(
            &cfg.baselines,
            cfg.seed ^ 0x6a2c,
        )?)?,
    );
    for model in ["diffusion", "gan"] {
        if let Some(days) = read_generated_returns(&cfg.out_dir, model)? {
            if days.len() >= 30 {
                models.insert(model.to_string(), stylized_fact_report(&days)?);
            }
        }
    }
    write_json(&run.staging("stylized.json"), &StylizedEval { models })?;
    run.commit("stylized.json", &eval_path(&cfg.out_dir, "stylized.json"))?;
    run.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsEval {
    pub models: BTreeMap<String, ConditionsEvalEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionsEvalEntry {
    pub trend_mae: f64,
    pub rv_mae: f64,
    /// Zero-predictor references: mean |requested| over the evaluated points.
    pub trend_baseline: f64,
    pub rv_baseline: f64,
    pub points: usize,
}

fn eval_conditions(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::EvalConditions, cfg)?;
    let mut models = BTreeMap::new();
    let mut any = false;
    for model in ["diffusion", "gan"] {
        let path = generated_dir(&cfg.out_dir, model).join("conditions.json");
        if !path.exists() {
            continue;
        }
        any = true;
        run.record_input(&path)?;
        let points: Vec<ConditionScatterPoint> = read_json(&path, "generate")?;
        let mae = condition_mae(&points)?;
        let n = points.len() as f64;
        let trend_baseline =
            points.iter().map(|p| p.requested.trend.abs()).sum::<f64>() / n;
        let rv_baseline = points.iter().map(|p| p.requested.rv.abs()).sum::<f64>() / n;
        let rel_csv = format!("{model}-scatter.csv");
        let csv_path = run.staging(&rel_csv);
        let mut f =
            std::fs::File::create(&csv_path).map_err(|e| AppError::io(&csv_path, e))?;
        writeln!(f, "trend_req,rv_req,trend_real,rv_real")
            .map_err(|e| AppError::io(&csv_path, e))?;
        for p in &points {
            writeln!(
                f,
                "{},{},{},{}",
                p.requested.trend, p.requested.rv, p.realized.trend, p.realized.rv
            )
            .map_err(|e| AppError::io(&csv_path, e))?;
        }
        run.commit(
            &rel_csv,
            &eval_path(&cfg.out_dir, &format!("{model}-scatter.csv")),
        )?;
        models.insert(
            model.to_string(),
            ConditionsEvalEntry {
                trend_mae: mae.trend_mae,
                rv_mae: mae.rv_mae,
                trend_baseline,
                rv_baseline,
                points: points.len(),
            },
        );
    }
    if !any {
        return Err(AppError::MissingUpstream {
            path: generated_dir(&cfg.out_dir, "diffusion").join("conditions.json"),
            producer: "generate".to_string(),
        });
    }
    write_json(&run.staging("conditions.json"), &ConditionsEval { models })?;
    run.commit(
        "conditions.json",
        &eval_path(&cfg.out_dir, "conditions.json"),
    )?;
    run.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityEval {
    /// One report per (trend, rv) condition, keyed "trend/rv".
    pub conditions: BTreeMap<String, DiversityReport>,
}

fn eval_diversity(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::EvalDiversity, cfg)?;
    let ddir = diffusion_dir(&cfg.out_dir);
    let model = DiffusionModel::load(&ddir)?;
    run.record_input(&crate::checkpoint::weights_path(&ddir))?;
    let mut conditions = BTreeMap::new();
    for (i, &(trend, rv)) in cfg.metrics.diversity_conditions.iter().enumerate() {
        let series = model.generate_series(
            ConditionPair::new(trend, rv),
            cfg.diffusion.guidance_gamma,
            cfg.metrics.diversity_samples,
            cfg.seed.wrapping_add(3000 + i as u64),
        )?;
        let samples: Vec<Vec<f64>> = series.into_iter().map(|s| s.returns).collect();
        conditions.insert(format!("{trend}/{rv}"), diversity_report(&samples)?);
    }
    write_json(&run.staging("diversity.json"), &DiversityEval { conditions })?;
    run.commit("diversity.json", &eval_path(&cfg.out_dir, "diversity.json"))?;
    run.finish()
}

/// GBM paths for hedging, rescaled to S_0 = 1, with realized-rv features.
pub fn hedge_paths(
    sigma_day: f64,
    count: usize,
    steps: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let params = GbmParams::new(0.0, sigma_day, 1.0 / steps as f64)?;
    let mut paths = Vec::with_capacity(count);
    let mut vols = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = sample_rng(seed, i as u64);
        let p = simulate_gbm(&params, steps, 1.0, &mut rng)?;
        let rv: f64 = cofindiff_core::condition::scaled_log_returns(&p)
            .iter()
            .map(|r| r * r)
            .sum();
        paths.push(p);
        vols.push(rv);
    }
    Ok((paths, vols))
}

fn hedge_train(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::HedgeTrain, cfg)?;
    let h = &cfg.hedging;
    let steps = cfg.data.session.points - 1;
    let (train_paths, train_vols) =
        hedge_paths(h.gbm_sigma, h.train_paths, steps, cfg.seed ^ 0x4e61)?;
    let n_val = (h.train_paths / 5).max(1);
    let (val_paths, val_vols) = hedge_paths(h.gbm_sigma, n_val, steps, cfg.seed ^ 0x7a1e)?;
    let (model, report) = train_hedger(
        &train_paths,
        &train_vols,
        &val_paths,
        &val_vols,
        h,
        h.train.patience,
        h.train.lr,
        cfg.seed,
    )?;
    model.save(&run.staging("checkpoint"), cfg.seed)?;
    write_json(&run.staging("train_report.json"), &report)?;
    run.commit("checkpoint", &hedger_dir(&cfg.out_dir))?;
    run.commit(
        "train_report.json",
        &cfg.out_dir.join("hedge_train_report.json"),
    )?;
    run.finish()
}

fn hedge_eval(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::HedgeEval, cfg)?;
    let hdir = hedger_dir(&cfg.out_dir);
    let model = HedgerModel::load(&hdir)?;
    run.record_input(&crate::checkpoint::weights_path(&hdir))?;
    let h = &cfg.hedging;
    let steps = cfg.data.session.points - 1;
    let (paths, vols) = hedge_paths(h.gbm_sigma, h.eval_paths, steps, cfg.seed ^ 0x43a7)?;
    let spec = OptionSpec {
        strike: h.strike,
        maturity_steps: steps,
    };
    let conds: Vec<ConditionPair> = paths
        .iter()
        .zip(&vols)
        .map(|(p, &rv)| {
            let trend = 100.0 * (p[p.len() - 1] / p[0]).ln();
            ConditionPair::new(trend, rv)
        })
        .collect();
    let net_eps = simulate_hedge_net_batch(&model.net, &paths, &spec, h.cost_rate, &vols)?;
    let mut zero_eps = Vec::with_capacity(paths.len());
    let mut delta_eps = Vec::with_capacity(paths.len());
    for (p, &rv) in paths.iter().zip(&vols) {
        zero_eps.push(simulate_hedge(&Policy::Zero, p, &spec, h.cost_rate, rv)?);
        delta_eps.push(simulate_hedge(&Policy::BsDelta, p, &spec, h.cost_rate, rv)?);
    }
    for (i, ep) in net_eps.iter().enumerate() {
        if !ep.ledger_conserved() {
            return Err(AppError::Other(format!(
                "ledger violation on episode {i}"
            )));
        }
    }
    let report = evaluate_hedger(
        &[
            ("hedger".to_string(), net_eps.clone()),
            ("zero".to_string(), zero_eps),
            ("bs_delta".to_string(), delta_eps),
        ],
        &conds,
        RiskParams {
            erm_gamma: h.erm_gamma,
            cvar_alpha: h.cvar_alpha,
        },
    )?;
    write_json(&run.staging("report.json"), &report)?;
    // Episode dump for inspection, capped to keep the file small.
    let dump = run.staging("episodes.csv");
    let mut f = std::fs::File::create(&dump).map_err(|e| AppError::io(&dump, e))?;
    writeln!(f, "path,step,price,position,cost_to_date")
        .map_err(|e| AppError::io(&dump, e))?;
    for (i, ep) in net_eps.iter().take(20).enumerate() {
        let mut cost = 0.0;
        let mut prev = 0.0;
        for (t, &d) in ep.positions.iter().enumerate() {
            cost += h.cost_rate * ep.prices[t] * (d - prev).abs();
            prev = d;
            writeln!(f, "{i},{t},{},{d},{cost}", ep.prices[t])
                .map_err(|e| AppError::io(&dump, e))?;
        }
    }
    run.commit("report.json", &cfg.out_dir.join("hedge").join("report.json"))?;
    run.commit(
        "episodes.csv",
        &cfg.out_dir.join("hedge").join("episodes.csv"),
    )?;
    run.finish()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalReport {
    pub stylized: Option<StylizedEval>,
    pub conditions: Option<ConditionsEval>,
    pub diversity: Option<DiversityEval>,
    pub hedging: Option<HedgeReport>,
}

fn report(cfg: &RunConfig) -> Result<RunManifest> {
    let mut run = StageRun::begin(Stage::Report, cfg)?;
    let out = &cfg.out_dir;
    let load_opt = |run: &mut StageRun, path: PathBuf, producer: &str| -> Result<Option<serde_json::Value>> {
        if path.exists() {
            run.record_input(&path)?;
            Ok(Some(read_json(&path, producer)?))
        } else {
            Ok(None)
        }
    };
    let stylized = load_opt(&mut run, eval_path(out, "stylized.json"), "eval-stylized")?;
    let conditions = load_opt(&mut run, eval_path(out, "conditions.json"), "eval-conditions")?;
    let diversity = load_opt(&mut run, eval_path(out, "diversity.json"), "eval-diversity")?;
    let hedging = load_opt(&mut run, out.join("hedge").join("report.json"), "hedge-eval")?;
    if stylized.is_none() && conditions.is_none() && diversity.is_none() && hedging.is_none() {
        return Err(AppError::MissingUpstream {
            path: eval_path(out, "stylized.json"),
            producer: "eval-stylized".to_string(),
        });
    }
    let combined = serde_json::json!({
        "stylized": stylized,
        "conditions": conditions,
        "diversity": diversity,
        "hedging": hedging,
    });
    write_json(&run.staging("report.json"), &combined)?;
    run.commit("report.json", &out.join("report").join("report.json"))?;
    run.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn tiny_cfg(out: &Path) -> RunConfig {
        let mut cfg = RunConfig {
            out_dir: out.to_path_buf(),
            ..RunConfig::default()
        };
        cfg.data.session.points = 13; // 12-return days -> 8x8 images
        cfg.data.synth.days = 24;
        cfg.data.synth.val_fraction = 0.25;
        cfg.data.synth.test_fraction = 0.25;
        cfg.diffusion.steps = 6;
        cfg.diffusion.denoiser = crate::nn::denoiser::DenoiserConfig {
            base_channels: 4,
            attention_heads: 2,
            cond_embed_dim: 8,
            cond_tokens: 4,
            time_embed_dim: 8,
            norm_groups: 2,
            rows: 8,
            cols: 8,
        };
        cfg.diffusion.train = crate::config::TrainControl {
            epochs: 2,
            lr: 1e-3,
            lr_min: 1e-4,
            patience: 2,
            batch_size: 8,
        };
        cfg.diffusion.sample_count = 2;
        cfg.metrics.samples_per_condition = 1;
        cfg.metrics.trend_min = -2.0;
        cfg.metrics.trend_max = 2.0;
        cfg.metrics.trend_step = 2.0;
        cfg.metrics.rv_min = 5.0;
        cfg.metrics.rv_max = 15.0;
        cfg.metrics.rv_step = 10.0;
        cfg.metrics.diversity_samples = 4;
        cfg.metrics.diversity_conditions = vec![(1.0, 10.0)];
        cfg.baselines.gan = crate::nn::gan::GanConfig {
            latent_dim: 4,
            generator_hidden: vec![8],
            critic_hidden: vec![8],
            series_len: 12,
            ..Default::default()
        };
        cfg.baselines.gan_train = crate::config::GanTrainControl {
            epochs: 1,
            batch_size: 8,
            val_samples: 1,
            ..Default::default()
        };
        cfg.hedging.train = crate::config::TrainControl {
            epochs: 1,
            lr: 1e-4,
            lr_min: 1e-5,
            patience: 1,
            batch_size: 8,
        };
        cfg.hedging.train_paths = 16;
        cfg.hedging.eval_paths = 32;
        cfg
    }

    #[test]
    fn generate_before_fit_reports_missing_producer() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let err = run_stage(Stage::Generate, &cfg).unwrap_err();
        match err {
            AppError::MissingUpstream { producer, .. } => {
                assert_eq!(producer, "fit-diffusion")
            }
            other => panic!("expected MissingUpstream, got {other:?}"),
        }
    }

    #[test]
    fn full_tiny_pipeline_runs_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        run_stage(Stage::Ingest, &cfg).unwrap();
        run_stage(Stage::FitDiffusion, &cfg).unwrap();
        run_stage(Stage::FitGan, &cfg).unwrap();
        run_stage(Stage::Generate, &cfg).unwrap();
        let first = hash_file(
            &generated_dir(dir.path(), "diffusion").join("series.csv"),
        )
        .unwrap();
        run_stage(Stage::Generate, &cfg).unwrap();
        let second = hash_file(
            &generated_dir(dir.path(), "diffusion").join("series.csv"),
        )
        .unwrap();
        assert_eq!(first, second);
        run_stage(Stage::EvalConditions, &cfg).unwrap();
        run_stage(Stage::EvalDiversity, &cfg).unwrap();
        run_stage(Stage::HedgeTrain, &cfg).unwrap();
        run_stage(Stage::HedgeEval, &cfg).unwrap();
        run_stage(Stage::Report, &cfg).unwrap();
        let report: serde_json::Value = read_json(
            &dir.path().join("report").join("report.json"),
            "report",
        )
        .unwrap();
        assert!(report["conditions"].is_object());
        assert!(report["diversity"].is_object());
        assert!(report["hedging"].is_object());
        // Manifests written for every executed stage.
        for stage in [
            "ingest",
            "fit-diffusion",
            "generate",
            "eval-conditions",
            "eval-diversity",
            "hedge-train",
            "hedge-eval",
            "report",
        ] {
            assert!(
                dir.path()
                    .join("manifests")
                    .join(format!("{stage}.json"))
                    .exists(),
                "missing manifest for {stage}"
            );
        }
    }

    #[test]
    fn report_with_nothing_to_aggregate_fails() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        assert!(matches!(
            run_stage(Stage::Report, &cfg),
            Err(AppError::MissingUpstream { .. })
        ));
    }

    #[test]
    fn stage_names_round_trip() {
        for stage in Stage::ALL {
            assert_eq!(Stage::parse(stage.name()), Some(stage));
        }
        assert_eq!(Stage::parse("nope"), None);
    }
}
