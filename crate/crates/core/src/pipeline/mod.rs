//! End-to-end orchestration: configuration, on-disk layout, run manifest
//! and the phase drivers.
//!
//! Layout under `out_dir`:
//!
//! ```text
//! <dataset>/holdout.json, qi_sets.json, protect.json
//! <dataset>/<qi_id>/<config_id>.csv|.json|.ledger.csv
//! evaluations.csv  linkability.csv  meta.csv  meta.json  meta_excluded.csv
//! models/performance.json  models/linkability.json  models/support.json
//! recommendations/<dataset>.json
//! manifest.json
//! ```

mod config;
mod manifest;
mod phases;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::PipelineConfig;
pub use manifest::{FileRecord, PhaseRecord, RunManifest};
pub use phases::{
    build_metadataset, fit_models, measured_by_config, meta_csv_text, read_meta_csv, run_attack, run_evaluate,
    run_protect, EvaluationRow, LinkRow, MetaBuildSummary, ModelSupport, BASELINE_ID, EVALUATION_HEADER, LINK_HEADER,
};
pub use report::{cmd_recommend, compare_evaluations, profile_dataset, CompareReport, RecommendOptions};

use crate::error::{Error, Result};
use crate::riskprofile::QiSet;
use crate::seed;
use crate::tabular::{self, Dataset, Holdout};

pub const EVALUATIONS_CSV: &str = "evaluations.csv";
pub const LINKABILITY_CSV: &str = "linkability.csv";
pub const META_CSV: &str = "meta.csv";
pub const META_JSON: &str = "meta.json";
pub const META_EXCLUDED_CSV: &str = "meta_excluded.csv";
pub const MODELS_DIR: &str = "models";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Seed of one unit of work.
pub fn unit_seed(master: u64, dataset: &str, qi_id: usize, config_id: usize, phase: &str) -> u64 {
    seed::derive_seed(master, &[dataset, &qi_id.to_string(), &config_id.to_string(), phase])
}

/// Corpus CSVs sorted by file name; the dataset name is the file stem.
pub fn corpus_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            out.push((stem, path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::Pipeline(format!("no CSV files in corpus {}", dir.display())));
    }
    Ok(out)
}

/// A corpus dataset with its persisted holdout and QI sets.
#[derive(Debug, Clone)]
pub struct DatasetState {
    pub name: String,
    pub full: Dataset,
    pub holdout: Holdout,
    pub train: Dataset,
    pub test: Dataset,
    pub qi_sets: Vec<QiSet>,
}

impl DatasetState {
    fn split(name: &str, full: Dataset, holdout: Holdout, qi_sets: Vec<QiSet>) -> Self {
        let train = full.subset(&holdout.train_idx).with_name(name);
        let test = full.subset(&holdout.test_idx).with_name(format!("{name}-test"));
        DatasetState {
            name: name.to_string(),
            full,
            holdout,
            train,
            test,
            qi_sets,
        }
    }

    /// Reloads a dataset protected earlier in `out_dir`.
    pub fn load(cfg: &PipelineConfig, name: &str, csv: &Path) -> Result<Self> {
        let full = tabular::load_csv(csv, &cfg.target)?.with_name(name);
        let dir = cfg.out_dir.join(name);
        let holdout: Holdout = read_json(&dir.join("holdout.json"))?;
        let qi_sets: Vec<QiSet> = read_json(&dir.join("qi_sets.json"))?;
        Ok(DatasetState::split(name, full, holdout, qi_sets))
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs `f` on a pool sized by `worker_count` (rayon's default otherwise).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Pipeline(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
