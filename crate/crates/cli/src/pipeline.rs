//! Stage runners and the per-run output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use fedrec_core::cco::recommend::CcoModel;
use fedrec_core::ctr::train::ModelCheckpoint;
use fedrec_core::data::ctr::binarize_ratings;
use fedrec_core::data::events::{build_event_log, IndicatorSelection};
use fedrec_core::data::movielens::Dataset;
use fedrec_core::experiments::{run_ranking, train_centralized, train_federated, CtrData, LooSetup, Ranker};
use fedrec_core::features::{feature_names, read_sensor_csv, session_embedding, sessionize, SessionConfig};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{invalid, ExperimentConfig, Stage};

/// Metrics of one run. Everything here is a function of the configuration
/// and the data; wall-clock times go to `timing.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub stage: String,
    pub model: Option<String>,
    pub setting: String,
    pub config_hash: String,
    pub dataset_hash: String,
    pub seeds: Vec<u64>,
    /// Mean over seeds.
    pub metrics: BTreeMap<String, f64>,
    pub per_seed: Vec<BTreeMap<String, f64>>,
    pub details: Vec<Value>,
}

pub struct RunContext<'a> {
    pub data_dir: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..])
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn mean_metrics(per_seed: &[BTreeMap<String, f64>]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for m in per_seed {
        for (k, v) in m {
            *out.entry(k.clone()).or_insert(0.0) += v / per_seed.len() as f64;
        }
    }
    out
}

fn metrics<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Checks everything that can be checked without reading the data, so a
/// bad configuration fails before any file is written.
pub fn preflight(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<()> {
    cfg.dataset_dir(ctx.data_dir)?;
    if let Some(input) = cfg.features_input() {
        if !input.is_file() {
            return Err(invalid!("sensor file {} does not exist", input.display()));
        }
    }
    Ok(())
}

/// Creates the run directory and echoes the resolved configuration into it.
pub fn open_run_dir(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PathBuf> {
    let dir = cfg.run_dir(ctx.out);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;
    Ok(dir)
}

/// Runs the configured stage end to end and writes `report.json` and
/// `timing.json` next to the stage outputs.
pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(PathBuf, RunReport)> {
    preflight(cfg, ctx)?;
    let dir = open_run_dir(cfg, ctx)?;
    let start = Instant::now();
    let report = match cfg.stage {
        Stage::Cco => run_cco(cfg, ctx)?,
        Stage::CtrCentral => run_central(cfg, ctx, &dir)?,
        Stage::CtrFederated => run_federated(cfg, ctx, &dir)?,
        Stage::Features => run_features(cfg, &dir)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("timing.json"), &json!({ "wall_secs": start.elapsed().as_secs_f64() }))?;
    info!("{}: {:?}", dir.display(), report.metrics);
    Ok((dir, report))
}

fn base_report(cfg: &ExperimentConfig, setting: String, dataset_hash: String) -> RunReport {
    RunReport {
        name: cfg.name.clone(),
        stage: cfg.stage.name().to_string(),
        model: cfg.model.map(|m| m.name().to_string()),
        setting,
        config_hash: cfg.hash(),
        dataset_hash,
        seeds: cfg.seeds(),
        metrics: BTreeMap::new(),
        per_seed: Vec::new(),
        details: Vec::new(),
    }
}

fn finish(mut report: RunReport, per_seed: Vec<BTreeMap<String, f64>>, details: Vec<Value>) -> RunReport {
    report.metrics = mean_metrics(&per_seed);
    report.per_seed = per_seed;
    report.details = details;
    report
}

fn seed_suffix(cfg: &ExperimentConfig, seed: u64) -> String {
    if cfg.repeats > 1 {
        format!("-{seed}")
    } else {
        String::new()
    }
}

fn run_cco(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<RunReport> {
    let ds = cfg.load_dataset(ctx.data_dir)?;
    let ranking = cfg.ranking.expect("resolved config has a ranking block");
    let setting = match ranking.ranker {
        Ranker::PopRec => "popularity".to_string(),
        Ranker::Cco => ranking.indicators.indicator_names().join("+"),
    };
    let report = base_report(cfg, setting, ds.content_hash()?);
    let setup = LooSetup::new(&ds);
    let mut per_seed = Vec::new();
    let mut details = Vec::new();
    for seed in cfg.seeds() {
        let mut r = ranking;
        r.eval.seed = seed;
        let loo = run_ranking(&setup, &r)?;
        info!("seed {seed}: HR@{k} {:.4}, NDCG@{k} {:.4}", loo.hit_rate, loo.ndcg, k = r.eval.k);
        per_seed.push(metrics([("hr", loo.hit_rate), ("ndcg", loo.ndcg)]));
        details.push(json!({ "users": loo.users, "skipped": loo.skipped, "k": r.eval.k, "negatives": r.eval.negatives }));
    }
    Ok(finish(report, per_seed, details))
}

fn run_central(cfg: &ExperimentConfig, ctx: &RunContext, dir: &Path) -> Result<RunReport> {
    let ds = cfg.load_dataset(ctx.data_dir)?;
    let stage = cfg.ctr.as_ref().expect("resolved config has a ctr block");
    let fraction = stage.subsample.unwrap_or(1.0);
    let setting = match stage.subsample {
        Some(f) => format!("central subsample={f}"),
        None => "central".to_string(),
    };
    let report = base_report(cfg, setting, ds.content_hash()?);
    let mut per_seed = Vec::new();
    let mut details = Vec::new();
    for seed in cfg.seeds() {
        let data = CtrData::prepare_subsampled(&ds, stage.encoder, fraction, seed)?;
        let mut train = stage.train;
        train.seed = seed;
        let (model, r) = train_centralized(&data, &train)?;
        ModelCheckpoint::capture(model.as_ref(), &train.model).save(dir.join(format!("model{}.json", seed_suffix(cfg, seed))))?;
        per_seed.push(metrics([("auc", r.auc), ("logloss", r.logloss)]));
        details.push(serde_json::to_value(&r)?);
    }
    Ok(finish(report, per_seed, details))
}

fn run_federated(cfg: &ExperimentConfig, ctx: &RunContext, dir: &Path) -> Result<RunReport> {
    let ds = cfg.load_dataset(ctx.data_dir)?;
    let stage = cfg.federated.as_ref().expect("resolved config has a federated block");
    let fraction = stage.subsample.unwrap_or(1.0);
    let setting = format!("{} plan={}", stage.train.partition.name(), stage.train.rounds.plan.join("+"));
    let report = base_report(cfg, setting, ds.content_hash()?);
    let mut per_seed = Vec::new();
    let mut details = Vec::new();
    for seed in cfg.seeds() {
        let suffix = seed_suffix(cfg, seed);
        let data = CtrData::prepare_subsampled(&ds, stage.encoder, fraction, seed)?;
        let mut train = stage.train.clone();
        train.rounds.seed = seed;
        let store = stage.dump_clients.then(|| dir.join(format!("clients{suffix}")));
        let r = train_federated(&data, &train, store)?;
        r.history.write_csv(dir.join(format!("history{suffix}.csv")))?;
        r.history.write_json(dir.join(format!("history{suffix}.json")))?;
        per_seed.push(metrics([("auc", r.auc), ("logloss", r.logloss), ("pooled_auc", r.pooled_auc)]));
        let mut detail = serde_json::to_value(&r)?;
        if let Value::Object(m) = &mut detail {
            m.remove("history");
        }
        details.push(detail);
    }
    Ok(finish(report, per_seed, details))
}

fn run_features(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    let stage = cfg.features.as_ref().expect("resolved config has a features block");
    let input = cfg.features_input().unwrap();
    let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let report = base_report(cfg, "sessions".to_string(), sha256_hex(&bytes));
    let n = extract_features(&input, &stage.session, fs::File::create(dir.join("embeddings.csv"))?)?;
    Ok(finish(report, vec![metrics([("sessions", n as f64)])], vec![json!({ "input": stage.input })]))
}

/// Writes one 112-column row per session of the sensor stream in `input`;
/// returns the number of sessions.
pub fn extract_features(input: &Path, session: &SessionConfig, out: impl Write) -> Result<usize> {
    let stream = read_sensor_csv(input)?;
    let sessions = sessionize(&stream, session)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(feature_names())?;
    for s in &sessions {
        w.write_record(session_embedding(s).iter().map(f64::to_string))?;
    }
    w.flush()?;
    info!("{} sessions from {} readings", sessions.len(), stream.len());
    Ok(sessions.len())
}

/// Dataset summary and the event log of the selected indicators.
pub fn ingest(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PathBuf> {
    if cfg.dataset.is_none() {
        return Err(invalid!("`ingest` needs a config with a `dataset`"));
    }
    preflight(cfg, ctx)?;
    let dir = open_run_dir(cfg, ctx)?;
    let ds = cfg.load_dataset(ctx.data_dir)?;
    let selection = cfg.ranking.map_or(IndicatorSelection::ALL, |r| r.indicators);
    let log = build_event_log(&ds, selection);
    log.write_jsonl(dir.join("events.jsonl"))?;
    write_json(&dir.join("summary.json"), &summary(&ds, log.len())?)?;
    Ok(dir)
}

fn summary(ds: &Dataset, events: usize) -> Result<Value> {
    let binarized = binarize_ratings(ds);
    let positives = binarized.iter().filter(|r| r.label == 1).count();
    Ok(json!({
        "dataset_hash": ds.content_hash()?,
        "ratings": ds.ratings.len(),
        "users": ds.num_users(),
        "movies": ds.num_movies(),
        "binarized": binarized.len(),
        "positives": positives,
        "events": events,
    }))
}

/// Fits cross-occurrence similarities on every rating and writes them as
/// JSON lines, one indicator after another.
pub fn cco_build(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<PathBuf> {
    let Some(ranking) = cfg.ranking.filter(|r| r.ranker == Ranker::Cco) else {
        return Err(invalid!("`cco-build` needs a `cco` stage config with model `cco`"));
    };
    preflight(cfg, ctx)?;
    let dir = open_run_dir(cfg, ctx)?;
    let ds = cfg.load_dataset(ctx.data_dir)?;
    let log = build_event_log(&ds, ranking.indicators);
    let model = CcoModel::fit(&log, &ranking.indicators.indicator_names(), &ranking.cco)?;
    let path = dir.join("similarities.jsonl");
    let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
    for sim in model.similarities().values() {
        sim.write_jsonl(&mut w)?;
    }
    w.flush()?;
    Ok(path)
}
