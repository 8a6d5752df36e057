use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{PhaseRecord, RunManifest};
use super::{
    corpus_files, read_json, unit_seed, with_workers, write_json, write_text, DatasetState, PipelineConfig,
    EVALUATIONS_CSV, LINKABILITY_CSV, META_CSV, META_EXCLUDED_CSV, META_JSON, MODELS_DIR,
};
use crate::cash::{self, CvObjective, SearchOutcome};
use crate::error::{Error, Result};
use crate::learning::{learner_space_with, EvalResult, LearnerSpec};
use crate::linkattack::{self, LinkabilityReport};
use crate::metafeat::{self, MF_VERSION, N_FEATURES};
use crate::metamodel::{fit_meta, MetaModel, MetaRow, MetaTarget};
use crate::riskprofile::{sample_qi_sets, select_highest_risk, QiSet};
use crate::seed;
use crate::synth::{
    self, assemble_variant, enumerate_config_grid, variant_paths, ExternalImport, PrivacyConfig, Provenance,
    SmoteParams, SmotePlan, Technique,
};
use crate::tabular::{self, holdout_split};

/// Largest `knn` in the grid; neighbour lists are built once up to it.
const MAX_GRID_KNN: usize = 5;

fn finish_phase(cfg: &PipelineConfig, name: &str, record: PhaseRecord) -> Result<PhaseRecord> {
    let mut m = RunManifest::load_or_default(&cfg.out_dir)?;
    m.master_seed = cfg.master_seed;
    m.config = cfg.to_text();
    m.phases.insert(name.to_string(), record.clone());
    m.rescan(&cfg.out_dir)?;
    m.save(&cfg.out_dir)?;
    Ok(record)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QiProtectRecord {
    qi_set: QiSet,
    highest_risk_count: usize,
    status: String,
    native: Vec<usize>,
    imported: Vec<usize>,
    pending_external: Vec<usize>,
}

/// Protection phase: holdout split, QI sampling, ε-PrivateSMOTE variants
/// for every QI set, and import of any external variants supplied.
pub fn run_protect(cfg: &PipelineConfig) -> Result<PhaseRecord> {
    let start = Instant::now();
    let files = corpus_files(&cfg.corpus_dir)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| crate::Error::io(&cfg.out_dir, e))?;
    let mut record = PhaseRecord::default();
    let mut inputs = Vec::new();
    let grid = enumerate_config_grid();
    for (name, path) in &files {
        inputs.push(path.clone());
        match protect_dataset(cfg, name, path, &grid) {
            Ok((n_native, n_imported, warnings)) => {
                *record.counts.entry("native_variants".into()).or_default() += n_native;
                *record.counts.entry("imported_variants".into()).or_default() += n_imported;
                record.warnings.extend(warnings);
            }
            Err(e) => {
                warn!("protect {name}: {e}");
                record.warnings.push(format!("{name}: {e}"));
            }
        }
    }
    record.counts.insert("datasets".into(), files.len());
    record.status = "ok".into();
    record.seconds = start.elapsed().as_secs_f64();
    let mut m = RunManifest::load_or_default(&cfg.out_dir)?;
    m.inputs.clear();
    for p in &inputs {
        m.record_input(p)?;
    }
    m.save(&cfg.out_dir)?;
    finish_phase(cfg, "protect", record)
}

fn protect_dataset(
    cfg: &PipelineConfig,
    name: &str,
    path: &Path,
    grid: &[PrivacyConfig],
) -> Result<(usize, usize, Vec<String>)> {
    let full = tabular::load_csv(path, &cfg.target)?.with_name(name);
    let holdout = holdout_split(
        &full,
        cfg.holdout_fraction,
        seed::derive_seed(cfg.master_seed, &[name, "holdout"]),
    )?;
    let train = full.subset(&holdout.train_idx).with_name(name);
    let qi_sets = sample_qi_sets(
        &train,
        cfg.qi_count,
        cfg.qi_fraction,
        seed::derive_seed(cfg.master_seed, &[name, "qi"]),
    )?;
    let dir = cfg.out_dir.join(name);
    write_json(&dir.join("holdout.json"), &holdout)?;
    write_json(&dir.join("qi_sets.json"), &qi_sets)?;

    let mut warnings = Vec::new();
    let mut records = Vec::new();
    let (mut n_native, mut n_imported) = (0, 0);
    for qis in &qi_sets {
        let highrisk = select_highest_risk(&train, qis)?;
        let mut rec = QiProtectRecord {
            qi_set: qis.clone(),
            highest_risk_count: highrisk.len(),
            status: "ok".into(),
            native: Vec::new(),
            imported: Vec::new(),
            pending_external: Vec::new(),
        };
        if highrisk.is_empty() {
            let msg = format!("{name}: QI set {} has no highest-risk records; skipped", qis.id);
            warn!("{msg}");
            warnings.push(msg);
            rec.status = "skipped: no highest-risk records".into();
            records.push(rec);
            continue;
        }
        let plan = SmotePlan::new(&train, &highrisk, MAX_GRID_KNN)?;
        let native: Vec<&PrivacyConfig> = grid.iter().filter(|c| c.technique.is_native()).collect();
        let variants: Vec<Result<synth::ProtectedVariant>> = native
            .par_iter()
            .map(|c| {
                let s = unit_seed(cfg.master_seed, name, qis.id, c.config_id, "protect");
                let rows = plan.generate(&SmoteParams::from_config(c)?, s)?;
                let prov = Provenance {
                    source: name.to_string(),
                    qi_set: qis.id,
                    config: **c,
                    seed: s,
                };
                assemble_variant(&train, &highrisk, rows, prov)
            })
            .collect();
        for (c, v) in native.iter().zip(variants) {
            match v.and_then(|v| synth::write_variant(&cfg.out_dir, &v).map(|_| ())) {
                Ok(()) => {
                    rec.native.push(c.config_id);
                    n_native += 1;
                }
                Err(e) => warnings.push(format!("{name}/{}/{}: {e}", qis.id, c.config_id)),
            }
        }
        for c in grid.iter().filter(|c| !c.technique.is_native()) {
            let external = cfg
                .external_dir
                .as_ref()
                .map(|root| variant_paths(root, name, qis.id, c.config_id).0)
                .filter(|p| p.exists());
            let Some(src) = external else {
                rec.pending_external.push(c.config_id);
                continue;
            };
            let req = ExternalImport {
                source: &train,
                qi_set: qis.id,
                highrisk_count: highrisk.len(),
                technique: c.technique,
                params: c.params,
                seed: unit_seed(cfg.master_seed, name, qis.id, c.config_id, "import"),
            };
            match synth::import_external_variant(&src, &req).and_then(|v| synth::write_variant(&cfg.out_dir, &v)) {
                Ok(_) => {
                    rec.imported.push(c.config_id);
                    n_imported += 1;
                }
                Err(e) => warnings.push(format!("{name}/{}/{}: import failed: {e}", qis.id, c.config_id)),
            }
        }
        records.push(rec);
    }
    write_json(&dir.join("protect.json"), &records)?;
    info!("protected {name}: {n_native} native, {n_imported} imported variants");
    Ok((n_native, n_imported, warnings))
}

/// Variants present on disk for one dataset, as (QI set, config) pairs in
/// canonical order.
fn variants_on_disk<'a>(cfg: &PipelineConfig, st: &'a DatasetState) -> Vec<(&'a QiSet, PrivacyConfig)> {
    let grid = enumerate_config_grid();
    let mut out = Vec::new();
    for q in &st.qi_sets {
        for c in &grid {
            if variant_paths(&cfg.out_dir, &st.name, q.id, c.config_id).0.exists() {
                out.push((q, *c));
            }
        }
    }
    out
}

fn load_states(cfg: &PipelineConfig) -> Result<Vec<DatasetState>> {
    let mut states = Vec::new();
    for (name, path) in corpus_files(&cfg.corpus_dir)? {
        if cfg.out_dir.join(&name).join("qi_sets.json").exists() {
            states.push(DatasetState::load(cfg, &name, &path)?);
        } else {
            warn!("{name}: not protected yet; skipped");
        }
    }
    if states.is_empty() {
        return Err(Error::Pipeline("no protected datasets; run protect first".into()));
    }
    Ok(states)
}

/// One line of `evaluations.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRow {
    pub dataset: String,
    pub qi_id: Option<usize>,
    pub config_id: Option<usize>,
    pub optimizer: String,
    pub spec: Option<LearnerSpec>,
    pub result: Option<EvalResult>,
    pub total_resource_units: Option<f64>,
    pub status: String,
}

pub const EVALUATION_HEADER: [&str; 15] = [
    "dataset",
    "qi_id",
    "config_id",
    "spec_id",
    "fold_scores",
    "cv_auc_mean",
    "cv_auc_sd",
    "test_auc",
    "fit_seconds",
    "optimizer",
    "algorithm",
    "hyperparams",
    "resource_fraction",
    "total_resource_units",
    "status",
];

/// Config id recorded for the unprotected baseline rows.
pub const BASELINE_ID: &str = "baseline";

impl EvaluationRow {
    fn record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let r = self.result.as_ref();
        vec![
            self.dataset.clone(),
            self.qi_id.map_or(String::new(), |v| v.to_string()),
            self.config_id.map_or(BASELINE_ID.to_string(), |v| v.to_string()),
            self.spec.map_or(String::new(), |s| s.spec_id.to_string()),
            r.map_or(String::new(), |r| {
                r.fold_scores
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            }),
            opt(r.map(|r| r.cv_auc_mean)),
            opt(r.map(|r| r.cv_auc_sd)),
            opt(r.and_then(|r| r.test_auc)),
            opt(r.map(|r| r.fit_seconds)),
            self.optimizer.clone(),
            self.spec.map_or(String::new(), |s| s.algorithm.to_string()),
            self.spec.map_or(String::new(), |s| s.hyper.to_string()),
            opt(r.map(|r| r.resource_fraction)),
            opt(self.total_resource_units),
            self.status.clone(),
        ]
    }
}

fn search(
    cfg: &PipelineConfig,
    data: &tabular::Dataset,
    test: &tabular::Dataset,
    seed: u64,
) -> Result<(SearchOutcome, Vec<LearnerSpec>)> {
    let mut obj = CvObjective::new(data, Some(test), seed)?.with_caps(cfg.caps());
    obj.folds = cfg.folds;
    obj.repeats = cfg.repeats;
    let space = learner_space_with(obj.n_predictors(), &cfg.sgd_alpha);
    let outcome = cash::run_search(cfg.optimizer, &space, &obj, cfg.search_settings(), seed)?;
    Ok((outcome, space))
}

fn outcome_row(
    dataset: &str,
    qi: Option<usize>,
    config: Option<usize>,
    cfg: &PipelineConfig,
    r: Result<SearchOutcome>,
) -> EvaluationRow {
    match r {
        Ok(o) => EvaluationRow {
            dataset: dataset.to_string(),
            qi_id: qi,
            config_id: config,
            optimizer: cfg.optimizer.to_string(),
            spec: Some(o.best_spec),
            result: Some(o.best_result),
            total_resource_units: Some(o.total_resource_units),
            status: "ok".into(),
        },
        Err(e) => EvaluationRow {
            dataset: dataset.to_string(),
            qi_id: qi,
            config_id: config,
            optimizer: cfg.optimizer.to_string(),
            spec: None,
            result: None,
            total_resource_units: None,
            status: format!("failed: {e}"),
        },
    }
}

/// Development phase, utility half: learner search on every variant and on
/// each original training partition (the baseline).
pub fn run_evaluate(cfg: &PipelineConfig) -> Result<PhaseRecord> {
    let start = Instant::now();
    let states = load_states(cfg)?;
    let mut rows = Vec::new();
    let mut record = PhaseRecord::default();
    with_workers(cfg.worker_count, || -> Result<()> {
        for st in &states {
            let base_seed = seed::derive_seed(cfg.master_seed, &[&st.name, "baseline", "evaluate"]);
            let base = search(cfg, &st.train, &st.test, base_seed).map(|(o, _)| o);
            rows.push(outcome_row(&st.name, None, None, cfg, base));
            let work = variants_on_disk(cfg, st);
            let results: Vec<(EvaluationRow, Option<String>)> = work
                .par_iter()
                .map(|(q, c)| {
                    let s = unit_seed(cfg.master_seed, &st.name, q.id, c.config_id, "evaluate");
                    let r = synth::read_variant(&cfg.out_dir, &st.train, q.id, c.config_id)
                        .and_then(|v| search(cfg, &v.data, &st.test, s));
                    let ledger = r.as_ref().ok().map(|(o, space)| cash::ledger_csv(o, space));
                    (
                        outcome_row(&st.name, Some(q.id), Some(c.config_id), cfg, r.map(|(o, _)| o)),
                        ledger,
                    )
                })
                .collect();
            for ((q, c), (row, ledger)) in work.iter().zip(results) {
                if let Some(text) = ledger {
                    let csv = variant_paths(&cfg.out_dir, &st.name, q.id, c.config_id).0;
                    write_text(&csv.with_extension("ledger.csv"), &text)?;
                }
                if row.status != "ok" {
                    record
                        .warnings
                        .push(format!("{}/{}/{}: {}", st.name, q.id, c.config_id, row.status));
                }
                rows.push(row);
            }
            info!("evaluated {}", st.name);
        }
        Ok(())
    })??;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVALUATION_HEADER)?;
    for r in &rows {
        w.write_record(r.record())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Pipeline(e.to_string()))?;
    write_text(&cfg.out_dir.join(EVALUATIONS_CSV), &String::from_utf8_lossy(&bytes))?;
    record.counts.insert("rows".into(), rows.len());
    record
        .counts
        .insert("failed".into(), rows.iter().filter(|r| r.status != "ok").count());
    record.status = "ok".into();
    record.seconds = start.elapsed().as_secs_f64();
    finish_phase(cfg, "evaluate", record)
}

/// One line of `linkability.csv`.
#[derive(Debug, Clone)]
pub struct LinkRow {
    pub dataset: String,
    pub qi_id: usize,
    pub config_id: usize,
    pub report: Option<LinkabilityReport>,
    pub status: String,
}

pub const LINK_HEADER: [&str; 12] = [
    "dataset",
    "qi_id",
    "config_id",
    "n_targets",
    "n_control",
    "k",
    "naive_rate",
    "control_rate",
    "adjusted_risk",
    "aux_a",
    "aux_b",
    "status",
];

/// Development phase, risk half: linkage attack on every variant with the
/// holdout test partition as control.
pub fn run_attack(cfg: &PipelineConfig) -> Result<PhaseRecord> {
    let start = Instant::now();
    let states = load_states(cfg)?;
    let mut rows: Vec<LinkRow> = Vec::new();
    with_workers(cfg.worker_count, || {
        for st in &states {
            let n_targets = cfg
                .n_targets
                .unwrap_or_else(|| linkattack::default_n_targets(st.train.n_rows()))
                .min(st.train.n_rows());
            let work = variants_on_disk(cfg, st);
            let part: Vec<LinkRow> = work
                .par_iter()
                .map(|(q, c)| {
                    let s = unit_seed(cfg.master_seed, &st.name, q.id, c.config_id, "attack");
                    let r = synth::read_variant(&cfg.out_dir, &st.train, q.id, c.config_id).and_then(|v| {
                        linkattack::linkability(&st.train, &v.data, q, &st.test, n_targets, cfg.link_k, s)
                    });
                    let (report, status) = match r {
                        Ok(rep) => (Some(rep), "ok".to_string()),
                        Err(e) => (None, format!("failed: {e}")),
                    };
                    LinkRow {
                        dataset: st.name.clone(),
                        qi_id: q.id,
                        config_id: c.config_id,
                        report,
                        status,
                    }
                })
                .collect();
            rows.extend(part);
        }
    })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LINK_HEADER)?;
    for r in &rows {
        let rep = r.report.as_ref();
        let f = |g: fn(&LinkabilityReport) -> String| rep.map_or(String::new(), g);
        w.write_record([
            r.dataset.clone(),
            r.qi_id.to_string(),
            r.config_id.to_string(),
            f(|x| x.n_targets.to_string()),
            f(|x| x.n_control.to_string()),
            f(|x| x.k.to_string()),
            f(|x| x.naive_rate.to_string()),
            f(|x| x.control_rate.to_string()),
            f(|x| x.adjusted_risk.to_string()),
            f(|x| x.aux_split.0.join(";")),
            f(|x| x.aux_split.1.join(";")),
            r.status.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Pipeline(e.to_string()))?;
    write_text(&cfg.out_dir.join(LINKABILITY_CSV), &String::from_utf8_lossy(&bytes))?;
    let mut record = PhaseRecord::default();
    record.warnings = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| format!("{}/{}/{}: {}", r.dataset, r.qi_id, r.config_id, r.status))
        .collect();
    record.counts.insert("rows".into(), rows.len());
    record.counts.insert("failed".into(), record.warnings.len());
    record.status = "ok".into();
    record.seconds = start.elapsed().as_secs_f64();
    finish_phase(cfg, "attack", record)
}

type Key = (String, usize, usize);

/// Reads a CSV into header-keyed rows.
pub(crate) fn read_table(path: &Path) -> Result<Vec<HashMap<String, String>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(out)
}

fn keyed_metric(path: &Path, column: &str) -> Result<HashMap<Key, std::result::Result<f64, String>>> {
    let mut out = HashMap::new();
    for row in read_table(path)? {
        let (Some(qi), Some(cfg)) = (
            row.get("qi_id").and_then(|v| v.parse().ok()),
            row.get("config_id").and_then(|v| v.parse().ok()),
        ) else {
            continue;
        };
        let key = (row.get("dataset").cloned().unwrap_or_default(), qi, cfg);
        let status = row.get("status").cloned().unwrap_or_default();
        let value = if status == "ok" {
            row.get(column)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format!("missing {column}"))
        } else {
            Err(status)
        };
        out.insert(key, value);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaBuildSummary {
    pub mf_version: String,
    pub feature_names: Vec<String>,
    pub rows: usize,
    pub excluded: usize,
}

/// Joins meta-features of each variant with its measured utility and risk
/// into `meta.csv`.
pub fn build_metadataset(cfg: &PipelineConfig) -> Result<MetaBuildSummary> {
    let start = Instant::now();
    let states = load_states(cfg)?;
    let perf = keyed_metric(&cfg.out_dir.join(EVALUATIONS_CSV), "cv_auc_mean")?;
    let link = keyed_metric(&cfg.out_dir.join(LINKABILITY_CSV), "adjusted_risk")?;
    let mut rows: Vec<MetaRow> = Vec::new();
    let mut excluded: Vec<(Key, String)> = Vec::new();
    with_workers(cfg.worker_count, || {
        for st in &states {
            let work = variants_on_disk(cfg, st);
            let part: Vec<std::result::Result<MetaRow, (Key, String)>> = work
                .par_iter()
                .map(|(q, c)| {
                    let key: Key = (st.name.clone(), q.id, c.config_id);
                    let y_perf = match perf.get(&key) {
                        Some(Ok(v)) => *v,
                        Some(Err(e)) => return Err((key, format!("evaluation: {e}"))),
                        None => return Err((key, "evaluation missing".into())),
                    };
                    let y_link = match link.get(&key) {
                        Some(Ok(v)) => *v,
                        Some(Err(e)) => return Err((key, format!("attack: {e}"))),
                        None => return Err((key, "attack missing".into())),
                    };
                    let v = synth::read_variant(&cfg.out_dir, &st.train, q.id, c.config_id)
                        .map_err(|e| (key.clone(), format!("variant: {e}")))?;
                    let s = unit_seed(cfg.master_seed, &st.name, q.id, c.config_id, "metafeat");
                    let mf = metafeat::extract(&v.data, s);
                    Ok(MetaRow {
                        dataset: st.name.clone(),
                        qi_id: q.id,
                        config_id: c.config_id,
                        features: metafeat::feature_row(&mf, c),
                        y_perf,
                        y_link,
                    })
                })
                .collect();
            for r in part {
                match r {
                    Ok(row) => rows.push(row),
                    Err(x) => excluded.push(x),
                }
            }
        }
    })?;
    for ((d, q, c), why) in &excluded {
        warn!("meta row {d}/{q}/{c} excluded: {why}");
    }
    let mut ex = csv::Writer::from_writer(Vec::new());
    ex.write_record(["dataset", "qi_id", "config_id", "reason"])?;
    for ((d, q, c), why) in &excluded {
        ex.write_record([d.clone(), q.to_string(), c.to_string(), why.clone()])?;
    }
    let bytes = ex.into_inner().map_err(|e| Error::Pipeline(e.to_string()))?;
    write_text(&cfg.out_dir.join(META_EXCLUDED_CSV), &String::from_utf8_lossy(&bytes))?;
    if rows.is_empty() {
        return Err(Error::Pipeline("no joinable meta rows".into()));
    }
    write_text(&cfg.out_dir.join(META_CSV), &meta_csv_text(&rows)?)?;
    let summary = MetaBuildSummary {
        mf_version: MF_VERSION.to_string(),
        feature_names: metafeat::feature_names().iter().map(|s| s.to_string()).collect(),
        rows: rows.len(),
        excluded: excluded.len(),
    };
    write_json(&cfg.out_dir.join(META_JSON), &summary)?;
    let mut record = PhaseRecord::default();
    record.counts.insert("rows".into(), rows.len());
    record.counts.insert("excluded".into(), excluded.len());
    record.warnings = excluded
        .iter()
        .map(|((d, q, c), why)| format!("{d}/{q}/{c}: {why}"))
        .collect();
    record.status = "ok".into();
    record.seconds = start.elapsed().as_secs_f64();
    finish_phase(cfg, "meta-build", record)?;
    Ok(summary)
}

pub fn meta_csv_text(rows: &[MetaRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset".to_string(), "qi_id".into(), "config_id".into()];
    header.extend(metafeat::feature_names().iter().map(|s| s.to_string()));
    header.push("y_perf".into());
    header.push("y_link".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.dataset.clone(), r.qi_id.to_string(), r.config_id.to_string()];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.y_perf.to_string());
        rec.push(r.y_link.to_string());
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Pipeline(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

pub fn read_meta_csv(path: &Path) -> Result<Vec<MetaRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let expected = 3 + N_FEATURES + 2;
    let names = metafeat::feature_names();
    if headers.len() != expected || headers.iter().skip(3).zip(&names).any(|(h, n)| h != *n) {
        return Err(Error::SchemaMismatch(format!(
            "{} does not carry the {MF_VERSION} header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| Error::InvalidDataset(format!("meta.csv row {}: bad number `{}`", i + 1, &rec[j])))
        };
        let int = |j: usize| -> Result<usize> {
            rec[j]
                .parse()
                .map_err(|_| Error::InvalidDataset(format!("meta.csv row {}: bad id `{}`", i + 1, &rec[j])))
        };
        rows.push(MetaRow {
            dataset: rec[0].to_string(),
            qi_id: int(1)?,
            config_id: int(2)?,
            features: (3..3 + N_FEATURES).map(num).collect::<Result<_>>()?,
            y_perf: num(3 + N_FEATURES)?,
            y_link: num(4 + N_FEATURES)?,
        });
    }
    Ok(rows)
}

/// Techniques and datasets behind a pair of fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSupport {
    pub techniques: Vec<Technique>,
    pub datasets: Vec<String>,
    pub rows: usize,
}

/// Fits both meta-models from `meta.csv`, optionally leaving one dataset
/// out, and persists them under `models/`.
pub fn fit_models(cfg: &PipelineConfig, exclude_dataset: Option<&str>) -> Result<(MetaModel<f64>, MetaModel<f64>)> {
    let path = cfg.out_dir.join(META_CSV);
    if !path.exists() {
        return Err(Error::Pipeline(format!(
            "{} missing; run meta-build first",
            path.display()
        )));
    }
    let rows: Vec<MetaRow> = read_meta_csv(&path)?
        .into_iter()
        .filter(|r| exclude_dataset.is_none_or(|d| r.dataset != d))
        .collect();
    let perf = fit_meta(&rows, MetaTarget::Performance, cfg.ridge_lambda)?;
    let link = fit_meta(&rows, MetaTarget::Linkability, cfg.ridge_lambda)?;
    let grid = enumerate_config_grid();
    let mut techniques: Vec<Technique> = Vec::new();
    for r in &rows {
        let t = grid[r.config_id].technique;
        if !techniques.contains(&t) {
            techniques.push(t);
        }
    }
    techniques.sort();
    let datasets: Vec<String> = rows
        .iter()
        .map(|r| r.dataset.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let dir = cfg.out_dir.join(MODELS_DIR);
    write_json(&dir.join("performance.json"), &perf)?;
    write_json(&dir.join("linkability.json"), &link)?;
    write_json(
        &dir.join("support.json"),
        &ModelSupport {
            techniques,
            datasets,
            rows: rows.len(),
        },
    )?;
    let mut record = PhaseRecord::default();
    record.counts.insert("rows".into(), rows.len());
    record.status = match exclude_dataset {
        Some(d) => format!("ok (excluding {d})"),
        None => "ok".into(),
    };
    finish_phase(cfg, "meta-fit", record)?;
    Ok((perf, link))
}

pub(crate) fn load_models(cfg: &PipelineConfig) -> Result<Option<(MetaModel<f64>, MetaModel<f64>, ModelSupport)>> {
    let dir = cfg.out_dir.join(MODELS_DIR);
    let paths = ["performance.json", "linkability.json", "support.json"].map(|f| dir.join(f));
    if !paths.iter().all(|p| p.exists()) {
        return Ok(None);
    }
    Ok(Some((
        read_json(&paths[0])?,
        read_json(&paths[1])?,
        read_json(&paths[2])?,
    )))
}

/// Measured per-config outcome on one dataset, averaged over QI sets.
pub fn measured_by_config(rows: &[MetaRow], dataset: &str) -> BTreeMap<usize, (f64, f64)> {
    let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.dataset == dataset) {
        let e = acc.entry(r.config_id).or_default();
        e.0 += r.y_perf;
        e.1 += r.y_link;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|(k, (p, l, n))| (k, (p / n as f64, l / n as f64)))
        .collect()
}
