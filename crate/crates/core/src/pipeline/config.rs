use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cash::{Optimizer, SearchSettings};
use crate::error::{Error, Result};
use crate::learning::{FitCaps, SGD_ALPHA};
use crate::linkattack::DEFAULT_K;
use crate::metamodel::DEFAULT_RIDGE_LAMBDA;

/// Pipeline settings. Read from a flat `key = value` file; `#` starts a
/// comment. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    pub target: String,
    pub qi_count: usize,
    pub qi_fraction: f64,
    pub optimizer: Optimizer,
    pub link_k: usize,
    pub holdout_fraction: f64,
    /// `None`: `min(500, training rows)`.
    pub n_targets: Option<usize>,
    pub top_n: usize,
    pub worker_count: Option<usize>,
    /// Root of externally generated variants, laid out like `out_dir`.
    pub external_dir: Option<PathBuf>,
    pub sgd_alpha: Vec<f64>,
    pub max_trees: Option<usize>,
    pub max_epochs: Option<usize>,
    pub folds: usize,
    pub repeats: usize,
    pub sh_factor: usize,
    pub min_resource: f64,
    pub random_iter: usize,
    pub ridge_lambda: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("out"),
            master_seed: 0,
            target: "class".into(),
            qi_count: 3,
            qi_fraction: 0.4,
            optimizer: Optimizer::Sh,
            link_k: DEFAULT_K,
            holdout_fraction: 0.2,
            n_targets: None,
            top_n: 20,
            worker_count: None,
            external_dir: None,
            sgd_alpha: SGD_ALPHA.to_vec(),
            max_trees: None,
            max_epochs: None,
            folds: 5,
            repeats: 2,
            sh_factor: 3,
            min_resource: 1.0 / 9.0,
            random_iter: 20,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse `{value}` for `{key}`")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<Option<T>> {
    if value.is_empty() || value.eq_ignore_ascii_case("none") || value.eq_ignore_ascii_case("auto") {
        Ok(None)
    } else {
        parse(key, value, line).map(Some)
    }
}

impl PipelineConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        cfg.corpus_dir = resolve("corpus");
        cfg.out_dir = resolve("out");
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Config(format!("line {line}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            match key {
                "corpus_dir" => cfg.corpus_dir = resolve(value),
                "out_dir" => cfg.out_dir = resolve(value),
                "master_seed" => cfg.master_seed = parse(key, value, line)?,
                "target" => cfg.target = value.to_string(),
                "qi_count" => cfg.qi_count = parse(key, value, line)?,
                "qi_fraction" => cfg.qi_fraction = parse(key, value, line)?,
                "optimizer" => {
                    cfg.optimizer = value
                        .parse()
                        .map_err(|e: Error| Error::Config(format!("line {line}: {e}")))?
                }
                "link_k" => cfg.link_k = parse(key, value, line)?,
                "holdout_fraction" => cfg.holdout_fraction = parse(key, value, line)?,
                "n_targets" => cfg.n_targets = optional(key, value, line)?,
                "top_n" => cfg.top_n = parse(key, value, line)?,
                "worker_count" => cfg.worker_count = optional(key, value, line)?,
                "external_dir" => cfg.external_dir = (!value.is_empty()).then(|| resolve(value)),
                "sgd_alpha" => {
                    cfg.sgd_alpha = value
                        .split(',')
                        .map(|v| parse(key, v.trim(), line))
                        .collect::<Result<_>>()?
                }
                "max_trees" => cfg.max_trees = optional(key, value, line)?,
                "max_epochs" => cfg.max_epochs = optional(key, value, line)?,
                "folds" => cfg.folds = parse(key, value, line)?,
                "repeats" => cfg.repeats = parse(key, value, line)?,
                "sh_factor" => cfg.sh_factor = parse(key, value, line)?,
                "min_resource" => cfg.min_resource = parse(key, value, line)?,
                "random_iter" => cfg.random_iter = parse(key, value, line)?,
                "ridge_lambda" => cfg.ridge_lambda = parse(key, value, line)?,
                other => return Err(Error::Config(format!("line {line}: unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        PipelineConfig::parse(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.qi_count == 0 {
            return bad("qi_count must be >= 1".into());
        }
        if !(self.qi_fraction > 0.0 && self.qi_fraction <= 1.0) {
            return bad(format!("qi_fraction {} outside (0, 1]", self.qi_fraction));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!("holdout_fraction {} outside (0, 1)", self.holdout_fraction));
        }
        if self.link_k == 0 || self.top_n == 0 {
            return bad("link_k and top_n must be >= 1".into());
        }
        if self.sgd_alpha.is_empty() {
            return bad("sgd_alpha needs at least one value".into());
        }
        if self.folds < 2 || self.repeats < 1 {
            return bad("folds must be >= 2 and repeats >= 1".into());
        }
        if self.sh_factor < 2 || !(self.min_resource > 0.0 && self.min_resource <= 1.0) {
            return bad("sh_factor must be >= 2 and min_resource in (0, 1]".into());
        }
        if self.ridge_lambda < 0.0 {
            return bad("ridge_lambda must be >= 0".into());
        }
        Ok(())
    }

    pub fn caps(&self) -> FitCaps {
        FitCaps {
            max_trees: self.max_trees,
            max_epochs: self.max_epochs,
        }
    }

    pub fn search_settings(&self) -> SearchSettings {
        SearchSettings {
            factor: self.sh_factor,
            min_resource: self.min_resource,
            random_iter: self.random_iter,
        }
    }

    /// The settings back in `key = value` form.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |v| v.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "corpus_dir = {}", self.corpus_dir.display());
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "target = {}", self.target);
        let _ = writeln!(s, "qi_count = {}", self.qi_count);
        let _ = writeln!(s, "qi_fraction = {}", self.qi_fraction);
        let _ = writeln!(s, "optimizer = {}", self.optimizer);
        let _ = writeln!(s, "link_k = {}", self.link_k);
        let _ = writeln!(s, "holdout_fraction = {}", self.holdout_fraction);
        let _ = writeln!(s, "n_targets = {}", opt(self.n_targets));
        let _ = writeln!(s, "top_n = {}", self.top_n);
        let _ = writeln!(s, "worker_count = {}", opt(self.worker_count));
        if let Some(d) = &self.external_dir {
            let _ = writeln!(s, "external_dir = {}", d.display());
        }
        let alphas: Vec<String> = self.sgd_alpha.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(s, "sgd_alpha = {}", alphas.join(","));
        let _ = writeln!(s, "max_trees = {}", opt(self.max_trees));
        let _ = writeln!(s, "max_epochs = {}", opt(self.max_epochs));
        let _ = writeln!(s, "folds = {}", self.folds);
        let _ = writeln!(s, "repeats = {}", self.repeats);
        let _ = writeln!(s, "sh_factor = {}", self.sh_factor);
        let _ = writeln!(s, "min_resource = {}", self.min_resource);
        let _ = writeln!(s, "random_iter = {}", self.random_iter);
        let _ = writeln!(s, "ridge_lambda = {}", self.ridge_lambda);
        s
    }
}
