use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phases::{fit_models, load_models, read_table, ModelSupport};
use super::{write_json, PipelineConfig};
use crate::error::{Error, Result};
use crate::metamodel::{recommend, Recommendation};
use crate::riskprofile::{profile_report, sample_qi_sets, ProfileReport, QiSet};
use crate::seed;
use crate::stats::{bayes_sign_test, pct_diff, DEFAULT_MC_SAMPLES, ROPE_HI, ROPE_LO};
use crate::tabular;

#[derive(Debug, Clone, Default)]
pub struct RecommendOptions {
    /// Overrides `cfg.top_n`.
    pub top_n: Option<usize>,
    /// Refit the models without this dataset before recommending.
    pub exclude_dataset: Option<String>,
    /// Refit even when persisted models exist.
    pub refit: bool,
}

/// Ranks the grid for the dataset in `csv`, writes
/// `recommendations/<name>.json` and returns the recommendation.
pub fn cmd_recommend(cfg: &PipelineConfig, csv: &Path, opts: &RecommendOptions) -> Result<Recommendation> {
    let name = csv
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidArgument(format!("bad dataset path {}", csv.display())))?;
    let ds = tabular::load_csv(csv, &cfg.target)?.with_name(name);
    let loaded = if opts.refit || opts.exclude_dataset.is_some() {
        None
    } else {
        load_models(cfg)?
    };
    let (perf, link, support) = match loaded {
        Some(m) => m,
        None => {
            fit_models(cfg, opts.exclude_dataset.as_deref())?;
            load_models(cfg)?.ok_or_else(|| Error::Pipeline("models were not written".into()))?
        }
    };
    let ModelSupport { techniques, .. } = support;
    let top_n = opts.top_n.unwrap_or(cfg.top_n);
    let rec = recommend(
        &ds,
        &perf,
        &link,
        top_n,
        seed::derive_seed(cfg.master_seed, &[name, "recommend"]),
        Some(&techniques),
    )?;
    write_json(&cfg.out_dir.join("recommendations").join(format!("{name}.json")), &rec)?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub metric: String,
    pub n_pairs: usize,
    /// `(lose, draw, win)` for file A against file B.
    pub counts: (usize, usize, usize),
    pub p_lose: f64,
    pub p_draw: f64,
    pub p_win: f64,
    pub unmatched: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

fn metric_by_key(path: &Path, metric: &str) -> Result<HashMap<(String, String, String), f64>> {
    let rows = read_table(path)?;
    if let Some(first) = rows.first() {
        if !first.contains_key(metric) {
            return Err(Error::SchemaMismatch(format!(
                "{} has no column `{metric}`",
                path.display()
            )));
        }
    }
    let mut out = HashMap::new();
    for r in rows {
        if r.get("status").is_some_and(|s| s != "ok") {
            continue;
        }
        let Some(v) = r.get(metric).and_then(|v| v.parse::<f64>().ok()) else {
            continue;
        };
        let field = |k: &str| r.get(k).cloned().unwrap_or_default();
        out.insert((field("dataset"), field("qi_id"), field("config_id")), v);
    }
    Ok(out)
}

/// Pairs two evaluation files by `(dataset, qi_id, config_id)` and runs the
/// Bayesian sign test on the percentage differences of `metric`.
pub fn compare_evaluations(a: &Path, b: &Path, metric: &str, seed: u64) -> Result<CompareReport> {
    let ma = metric_by_key(a, metric)?;
    let mb = metric_by_key(b, metric)?;
    let mut keys: Vec<_> = ma.keys().filter(|k| mb.contains_key(*k)).cloned().collect();
    keys.sort();
    if keys.is_empty() {
        return Err(Error::InvalidArgument("no rows pair up between the two files".into()));
    }
    let diffs = keys
        .iter()
        .map(|k| pct_diff(ma[k], mb[k]))
        .collect::<Result<Vec<f64>>>()?;
    let r = bayes_sign_test(&diffs, ROPE_LO, ROPE_HI, 1.0, DEFAULT_MC_SAMPLES, seed)?;
    Ok(CompareReport {
        metric: metric.to_string(),
        n_pairs: keys.len(),
        counts: r.counts,
        p_lose: r.p_lose,
        p_draw: r.p_draw,
        p_win: r.p_win,
        unmatched: ma.len() + mb.len() - 2 * keys.len(),
        mc_samples: r.mc_samples,
        seed,
    })
}

/// Risk profile of `csv` under the given QI columns, or under
/// `cfg.qi_count` sampled QI sets when none are given.
pub fn profile_dataset(cfg: &PipelineConfig, csv: &Path, columns: Option<Vec<String>>) -> Result<Vec<ProfileReport>> {
    let name = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let ds = tabular::load_csv(csv, &cfg.target)?.with_name(name);
    let sets = match columns {
        Some(cols) => vec![QiSet::new(0, cols)],
        None => sample_qi_sets(
            &ds,
            cfg.qi_count,
            cfg.qi_fraction,
            seed::derive_seed(cfg.master_seed, &[name, "qi"]),
        )?,
    };
    sets.iter().map(|q| profile_report(&ds, q)).collect()
}
