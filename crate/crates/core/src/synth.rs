//! Privacy configurations and protected-variant construction.
//!
//! Only the highest-risk records are replaced. The interpolation synthesizer
//! ([`private_smote`]) is native; the neural synthesizers of the grid are
//! enumerated so their externally produced variants can be imported.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gower::{k_smallest, GowerScale};
use crate::seed;
use crate::tabular::{self, Dataset, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    CopulaGAN,
    TVAE,
    CTGAN,
    DPGAN,
    PATEGAN,
    PrivateSMOTE,
}

impl Technique {
    /// Grid order.
    pub const ALL: [Technique; 6] = [
        Technique::CopulaGAN,
        Technique::TVAE,
        Technique::CTGAN,
        Technique::DPGAN,
        Technique::PATEGAN,
        Technique::PrivateSMOTE,
    ];

    pub fn slot(self) -> usize {
        Technique::ALL.iter().position(|&t| t == self).unwrap()
    }

    pub fn is_native(self) -> bool {
        self == Technique::PrivateSMOTE
    }

    pub fn parse(s: &str) -> Result<Technique> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "copulagan" => Technique::CopulaGAN,
            "tvae" => Technique::TVAE,
            "ctgan" => Technique::CTGAN,
            "dpgan" => Technique::DPGAN,
            "pategan" => Technique::PATEGAN,
            "privatesmote" | "epsilonprivatesmote" => Technique::PrivateSMOTE,
            _ => return Err(Error::OutsideGrid(format!("unknown technique `{s}`"))),
        })
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Technique::CopulaGAN => "CopulaGAN",
            Technique::TVAE => "TVAE",
            Technique::CTGAN => "CTGAN",
            Technique::DPGAN => "DPGAN",
            Technique::PATEGAN => "PATEGAN",
            Technique::PrivateSMOTE => "PrivateSMOTE",
        };
        f.write_str(s)
    }
}

/// Parameter assignment of one grid cell. Absent keys are inapplicable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigParams {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epochs: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub batch_size: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub knn: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub config_id: usize,
    pub technique: Technique,
    pub params: ConfigParams,
}

impl fmt::Display for PrivacyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}(", self.config_id, self.technique)?;
        let p = &self.params;
        let mut parts = Vec::new();
        if let Some(v) = p.epochs {
            parts.push(format!("epochs={v}"));
        }
        if let Some(v) = p.batch_size {
            parts.push(format!("batch_size={v}"));
        }
        if let Some(v) = p.n {
            parts.push(format!("N={v}"));
        }
        if let Some(v) = p.knn {
            parts.push(format!("knn={v}"));
        }
        if let Some(v) = p.epsilon {
            parts.push(format!("epsilon={v}"));
        }
        write!(f, "{})", parts.join(", "))
    }
}

pub const GAN_EPOCHS: [u32; 2] = [100, 200];
pub const GAN_BATCH_SIZES: [u32; 2] = [50, 100];
pub const DP_GAN_EPSILONS: [f64; 4] = [0.1, 0.5, 1.0, 5.0];
pub const SMOTE_N: [u32; 3] = [1, 2, 3];
pub const SMOTE_KNN: [u32; 3] = [1, 3, 5];
pub const SMOTE_EPSILONS: [f64; 5] = [0.1, 0.5, 1.0, 5.0, 10.0];

/// Number of configurations in the canonical grid.
pub const GRID_SIZE: usize = 89;

/// The canonical privacy-configuration grid, in a fixed order: techniques in
/// grid order, then parameters nested in declaration order.
pub fn enumerate_config_grid() -> Vec<PrivacyConfig> {
    let mut out = Vec::with_capacity(GRID_SIZE);
    let mut push = |technique, params| {
        let config_id = out.len();
        out.push(PrivacyConfig {
            config_id,
            technique,
            params,
        })
    };
    for t in [Technique::CopulaGAN, Technique::TVAE, Technique::CTGAN] {
        for e in GAN_EPOCHS {
            for b in GAN_BATCH_SIZES {
                push(
                    t,
                    ConfigParams {
                        epochs: Some(e),
                        batch_size: Some(b),
                        ..Default::default()
                    },
                );
            }
        }
    }
    for t in [Technique::DPGAN, Technique::PATEGAN] {
        for e in GAN_EPOCHS {
            for b in GAN_BATCH_SIZES {
                for eps in DP_GAN_EPSILONS {
                    push(
                        t,
                        ConfigParams {
                            epochs: Some(e),
                            batch_size: Some(b),
                            epsilon: Some(eps),
                            ..Default::default()
                        },
                    );
                }
            }
        }
    }
    for n in SMOTE_N {
        for k in SMOTE_KNN {
            for eps in SMOTE_EPSILONS {
                push(
                    Technique::PrivateSMOTE,
                    ConfigParams {
                        n: Some(n),
                        knn: Some(k),
                        epsilon: Some(eps),
                        ..Default::default()
                    },
                );
            }
        }
    }
    out
}

/// Finds the grid cell matching `technique` and `params` exactly.
pub fn lookup_config(technique: Technique, params: &ConfigParams) -> Result<PrivacyConfig> {
    enumerate_config_grid()
        .into_iter()
        .find(|c| c.technique == technique && c.params == *params)
        .ok_or_else(|| {
            Error::OutsideGrid(format!(
                "{technique} with {}",
                serde_json::to_string(params).unwrap_or_default()
            ))
        })
}

pub fn config_by_id(config_id: usize) -> Result<PrivacyConfig> {
    enumerate_config_grid()
        .get(config_id)
        .copied()
        .ok_or_else(|| Error::OutsideGrid(format!("config id {config_id}")))
}

/// Draws from Laplace(0, scale) by inverting the CDF.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale <= 0.0 {
        return 0.0;
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            return -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteParams {
    /// Replicas emitted per highest-risk record.
    pub replicas: usize,
    pub knn: usize,
    pub epsilon: f64,
    /// Pins the interpolation factor instead of drawing it from U(0,1).
    /// Only meant for tests that isolate the noise term.
    pub fixed_gap: Option<f64>,
}

impl SmoteParams {
    pub fn new(replicas: usize, knn: usize, epsilon: f64) -> Self {
        SmoteParams {
            replicas,
            knn,
            epsilon,
            fixed_gap: None,
        }
    }

    pub fn from_config(config: &PrivacyConfig) -> Result<Self> {
        match (
            config.technique,
            config.params.n,
            config.params.knn,
            config.params.epsilon,
        ) {
            (Technique::PrivateSMOTE, Some(n), Some(k), Some(e)) => Ok(SmoteParams::new(n as usize, k as usize, e)),
            _ => Err(Error::Unsupported(format!("{config} is not synthesized natively"))),
        }
    }
}

const MAX_REPLICA_ATTEMPTS: usize = 64;

/// Neighbour structure over the highest-risk partition, reusable across
/// parameter settings for one (dataset, QI set) pair.
#[derive(Debug, Clone)]
pub struct SmotePlan<'a> {
    ds: &'a Dataset,
    highrisk: Vec<usize>,
    /// Same-class neighbours of each highest-risk row (positions into
    /// `highrisk`), nearest first, at most `max_knn` long.
    neighbours: Vec<Vec<usize>>,
    max_knn: usize,
    numeric: Vec<NumericBounds>,
    categorical: Vec<usize>,
    removed: HashSet<Vec<u64>>,
}

#[derive(Debug, Clone, Copy)]
struct NumericBounds {
    col: usize,
    /// Range over the highest-risk partition (column range if that is
    /// zero); the noise sensitivity.
    sensitivity: f64,
    lo: f64,
    hi: f64,
}

impl<'a> SmotePlan<'a> {
    pub fn new(ds: &'a Dataset, highrisk: &[usize], max_knn: usize) -> Result<Self> {
        if highrisk.is_empty() {
            return Err(Error::InvalidArgument("empty highest-risk set".into()));
        }
        if let Some(&bad) = highrisk.iter().find(|&&i| i >= ds.n_rows()) {
            return Err(Error::InvalidArgument(format!("row index {bad} out of range")));
        }
        let predictors = ds.predictor_indices();
        let part = ds.subset(highrisk);
        let view = GowerScale::new(ds, &predictors).view::<f64>(&part);
        let labels = part.labels();
        let neighbours = (0..highrisk.len())
            .map(|i| {
                let cand: Vec<(f64, usize)> = (0..highrisk.len())
                    .filter(|&j| j != i && labels[j] == labels[i])
                    .map(|j| (view.distance(i, &view, j), j))
                    .collect();
                k_smallest(cand, max_knn)
            })
            .collect();
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for &c in &predictors {
            match ds.numeric_range(c) {
                Some((lo, hi)) => {
                    let (plo, phi) = part.numeric_range(c).unwrap_or((0.0, 0.0));
                    // a partition with zero spread falls back to the column range
                    let sensitivity = if phi > plo { phi - plo } else { hi - lo };
                    numeric.push(NumericBounds {
                        col: c,
                        sensitivity,
                        lo,
                        hi,
                    });
                }
                None => categorical.push(c),
            }
        }
        let removed = highrisk.iter().map(|&i| ds.row_key(i)).collect();
        Ok(SmotePlan {
            ds,
            highrisk: highrisk.to_vec(),
            neighbours,
            max_knn,
            numeric,
            categorical,
            removed,
        })
    }

    pub fn highrisk(&self) -> &[usize] {
        &self.highrisk
    }

    /// Emits `replicas` synthetic rows per highest-risk record, grouped by
    /// record in partition order.
    pub fn generate(&self, params: &SmoteParams, seed: u64) -> Result<Vec<Vec<Value>>> {
        if params.knn == 0 {
            return Err(Error::InvalidArgument("knn must be >= 1".into()));
        }
        if params.knn > self.max_knn {
            return Err(Error::InvalidArgument(format!(
                "knn {} exceeds plan capacity {}",
                params.knn, self.max_knn
            )));
        }
        if !(params.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be > 0".into()));
        }
        if params.replicas == 0 {
            return Err(Error::InvalidArgument("N must be >= 1".into()));
        }
        let mut rng = seed::rng(seed);
        let mut out = Vec::with_capacity(self.highrisk.len() * params.replicas);
        for (pos, &t) in self.highrisk.iter().enumerate() {
            let pool = &self.neighbours[pos][..self.neighbours[pos].len().min(params.knn)];
            let base = self.ds.row(t);
            for _ in 0..params.replicas {
                let mut attempt = 0;
                let row = loop {
                    let u = if pool.is_empty() {
                        t
                    } else {
                        self.highrisk[pool[rng.random_range(0..pool.len())]]
                    };
                    let row = self.replica(&base, u, params, &mut rng);
                    let key: Vec<u64> = row.iter().map(|v| v.key()).collect();
                    if !self.removed.contains(&key) {
                        break row;
                    }
                    attempt += 1;
                    if attempt >= MAX_REPLICA_ATTEMPTS {
                        return Err(Error::VerbatimLeak(out.len()));
                    }
                };
                out.push(row);
            }
        }
        Ok(out)
    }

    fn replica(&self, base: &[Value], u: usize, params: &SmoteParams, rng: &mut seed::Rng) -> Vec<Value> {
        let mut row = base.to_vec();
        let gap = params.fixed_gap.unwrap_or_else(|| rng.random::<f64>());
        for nb in &self.numeric {
            let tv = match base[nb.col] {
                Value::Num(x) => x,
                Value::Cat(_) => unreachable!("numeric column"),
            };
            let uv = match self.ds.value(u, nb.col) {
                Value::Num(x) => x,
                Value::Cat(_) => unreachable!("numeric column"),
            };
            let noise = sample_laplace(rng, nb.sensitivity / params.epsilon);
            let v = tv + gap * (uv - tv) + noise;
            row[nb.col] = Value::Num(v.clamp(nb.lo, nb.hi));
        }
        for &c in &self.categorical {
            if rng.random_bool(0.5) {
                row[c] = self.ds.value(u, c);
            }
        }
        row
    }
}

/// Interpolation-based replacement of highest-risk rows with Laplace noise.
///
/// Each replica interpolates the seed record towards one of its `knn`
/// nearest same-class highest-risk neighbours (Gower distance over the
/// predictors), adds Laplace noise with scale `range_H / epsilon` per numeric
/// attribute, clamps to the observed column range, and picks each categorical
/// value from either endpoint with probability one half. Labels are copied
/// from the seed record. Replicas that would reproduce a replaced record
/// verbatim are redrawn.
pub fn private_smote(ds: &Dataset, highrisk: &[usize], params: &SmoteParams, seed: u64) -> Result<Vec<Vec<Value>>> {
    if params.knn == 0 {
        return Err(Error::InvalidArgument("knn must be >= 1".into()));
    }
    SmotePlan::new(ds, highrisk, params.knn)?.generate(params, seed)
}

/// One replica per highest-risk row, each predictor drawn independently from
/// its empirical marginal over the highest-risk rows.
pub fn marginal_baseline_synth(ds: &Dataset, highrisk: &[usize], seed: u64) -> Result<Vec<Vec<Value>>> {
    if highrisk.is_empty() {
        return Err(Error::InvalidArgument("empty highest-risk set".into()));
    }
    let mut rng = seed::rng(seed);
    let target = ds.target_index();
    Ok(highrisk
        .iter()
        .map(|&anchor| {
            (0..ds.n_cols())
                .map(|c| {
                    if c == target {
                        ds.value(anchor, c)
                    } else {
                        ds.value(highrisk[rng.random_range(0..highrisk.len())], c)
                    }
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub qi_set: usize,
    pub config: PrivacyConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ProtectedVariant {
    pub data: Dataset,
    pub provenance: Provenance,
    pub replaced: usize,
    pub synthesized: usize,
}

impl ProtectedVariant {
    pub fn label(&self) -> String {
        variant_label(
            &self.provenance.source,
            self.provenance.qi_set,
            self.provenance.config.config_id,
        )
    }
}

pub fn variant_label(source: &str, qi_set: usize, config_id: usize) -> String {
    format!("{source}/{qi_set}/{config_id}")
}

/// Non-risk rows in source order followed by the synthetic rows.
pub fn assemble_variant(
    ds: &Dataset,
    highrisk: &[usize],
    synthetic: Vec<Vec<Value>>,
    provenance: Provenance,
) -> Result<ProtectedVariant> {
    let risky: HashSet<usize> = highrisk.iter().copied().collect();
    let removed: HashSet<Vec<u64>> = highrisk.iter().map(|&i| ds.row_key(i)).collect();
    for (i, row) in synthetic.iter().enumerate() {
        if row.len() != ds.n_cols() {
            return Err(Error::SchemaMismatch(format!(
                "synthetic row {i} has {} values, schema has {}",
                row.len(),
                ds.n_cols()
            )));
        }
        let key: Vec<u64> = row.iter().map(|v| v.key()).collect();
        if removed.contains(&key) {
            return Err(Error::VerbatimLeak(i));
        }
    }
    let synthesized = synthetic.len();
    let mut rows: Vec<Vec<Value>> = (0..ds.n_rows())
        .filter(|i| !risky.contains(i))
        .map(|i| ds.row(i))
        .collect();
    rows.extend(synthetic);
    let label = variant_label(&provenance.source, provenance.qi_set, provenance.config.config_id);
    let data = ds.from_rows(label, &rows)?;
    Ok(ProtectedVariant {
        data,
        provenance,
        replaced: risky.len(),
        synthesized,
    })
}

/// Declared origin of an externally generated variant.
#[derive(Debug, Clone)]
pub struct ExternalImport<'a> {
    pub source: &'a Dataset,
    pub qi_set: usize,
    pub highrisk_count: usize,
    pub technique: Technique,
    pub params: ConfigParams,
    pub seed: u64,
}

pub fn import_external_variant(path: impl AsRef<Path>, req: &ExternalImport<'_>) -> Result<ProtectedVariant> {
    let config = lookup_config(req.technique, &req.params)?;
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let label = variant_label(req.source.name(), req.qi_set, config.config_id);
    let data = tabular::read_csv_like(file, &label, req.source)?;
    let kept = req.source.n_rows().saturating_sub(req.highrisk_count);
    Ok(ProtectedVariant {
        synthesized: data.n_rows().saturating_sub(kept),
        replaced: req.highrisk_count,
        data,
        provenance: Provenance {
            source: req.source.name().to_string(),
            qi_set: req.qi_set,
            config,
            seed: req.seed,
        },
    })
}

/// Sidecar written next to each persisted variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSidecar {
    pub source: String,
    pub qi_set: usize,
    pub config_id: usize,
    pub technique: Technique,
    pub params: ConfigParams,
    pub replaced: usize,
    pub synthesized: usize,
    pub seed: u64,
}

impl From<&ProtectedVariant> for VariantSidecar {
    fn from(v: &ProtectedVariant) -> Self {
        VariantSidecar {
            source: v.provenance.source.clone(),
            qi_set: v.provenance.qi_set,
            config_id: v.provenance.config.config_id,
            technique: v.provenance.config.technique,
            params: v.provenance.config.params,
            replaced: v.replaced,
            synthesized: v.synthesized,
            seed: v.provenance.seed,
        }
    }
}

pub fn variant_paths(root: &Path, source: &str, qi_set: usize, config_id: usize) -> (PathBuf, PathBuf) {
    let dir = root.join(source).join(qi_set.to_string());
    (
        dir.join(format!("{config_id}.csv")),
        dir.join(format!("{config_id}.json")),
    )
}

/// Writes `<root>/<dataset>/<qi_id>/<config_id>.csv` and its JSON sidecar.
pub fn write_variant(root: &Path, v: &ProtectedVariant) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = variant_paths(
        root,
        &v.provenance.source,
        v.provenance.qi_set,
        v.provenance.config.config_id,
    );
    let dir = csv_path.parent().expect("variant dir");
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    tabular::write_csv(&v.data, &csv_path)?;
    let side = serde_json::to_string_pretty(&VariantSidecar::from(v))?;
    fs::write(&json_path, side).map_err(|e| Error::io(&json_path, e))?;
    Ok((csv_path, json_path))
}

/// Loads a persisted variant back against its source schema.
pub fn read_variant(root: &Path, source: &Dataset, qi_set: usize, config_id: usize) -> Result<ProtectedVariant> {
    let (csv_path, json_path) = variant_paths(root, source.name(), qi_set, config_id);
    let side: VariantSidecar =
        serde_json::from_str(&fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?)?;
    let file = fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let data = tabular::read_csv_like(file, &variant_label(source.name(), qi_set, config_id), source)?;
    Ok(ProtectedVariant {
        data,
        provenance: Provenance {
            source: side.source,
            qi_set: side.qi_set,
            config: config_by_id(side.config_id)?,
            seed: side.seed,
        },
        replaced: side.replaced,
        synthesized: side.synthesized,
    })
}

/// Per-technique counts of a grid, handy for reports.
pub fn grid_census(grid: &[PrivacyConfig]) -> BTreeMap<Technique, usize> {
    let mut m = BTreeMap::new();
    for c in grid {
        *m.entry(c.technique).or_default() += 1;
    }
    m
}
