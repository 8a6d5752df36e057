//! Native binary classifiers, AUC scoring and repeated stratified
//! cross-validation.

pub mod auc;
pub mod boost;
pub mod encode;
pub mod mlp;
pub mod sgd;

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use auc::{auc, auc_opt};
use boost::{BoostParams, Ensemble, Flavor};
use encode::{Layout, Matrix, Scaler};
use mlp::{MlpNet, MlpParams};
use sgd::{Linear, SgdParams};

use crate::error::{Error, Result};
use crate::scalar::{mean, sample_sd};
use crate::seed;
use crate::tabular::Dataset;

/// Rounds without validation-AUC improvement before training stops.
pub const PATIENCE: usize = 10;

/// Share of each fold's training side carved off for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Stops after [`PATIENCE`] consecutive updates that fail to beat the best
/// score seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    best: f64,
    since: usize,
    patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping::new(PATIENCE)
    }
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            best: f64::NEG_INFINITY,
            since: 0,
            patience,
        }
    }

    /// Records a score; returns true when training should stop.
    pub fn update(&mut self, score: f64) -> bool {
        if score > self.best {
            self.best = score;
            self.since = 0;
        } else {
            self.since += 1;
        }
        self.since >= self.patience
    }
}

/// Fallback stopping rule on training loss when no usable validation set
/// exists.
#[derive(Debug, Clone)]
pub(crate) struct LossPlateau {
    best: f64,
    since: usize,
    tol: f64,
    patience: usize,
}

impl LossPlateau {
    pub(crate) fn new(tol: f64, patience: usize) -> Self {
        LossPlateau {
            best: f64::INFINITY,
            since: 0,
            tol,
            patience,
        }
    }

    pub(crate) fn update(&mut self, loss: f64) -> bool {
        if loss < self.best - self.tol {
            self.best = loss;
            self.since = 0;
        } else {
            self.best = self.best.min(loss);
            self.since += 1;
        }
        self.since >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    BoostClassic,
    BoostNewton,
    SgdLinear,
    Mlp,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::BoostClassic => "BoostClassic",
            Algorithm::BoostNewton => "BoostNewton",
            Algorithm::SgdLinear => "SGDLinear",
            Algorithm::Mlp => "MLP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    Boost {
        n_estimators: usize,
        max_depth: usize,
        learning_rate: f64,
    },
    Sgd {
        alpha: f64,
        max_iter: usize,
        eta0: f64,
    },
    Mlp {
        hidden_size: usize,
        alpha: f64,
        max_iter: usize,
    },
}

impl fmt::Display for Hyper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Hyper::Boost {
                n_estimators,
                max_depth,
                learning_rate,
            } => write!(
                f,
                "n_estimators={n_estimators};max_depth={max_depth};learning_rate={learning_rate}"
            ),
            Hyper::Sgd { alpha, max_iter, eta0 } => write!(f, "alpha={alpha};max_iter={max_iter};eta0={eta0}"),
            Hyper::Mlp {
                hidden_size,
                alpha,
                max_iter,
            } => write!(f, "hidden_size={hidden_size};alpha={alpha};max_iter={max_iter}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub spec_id: usize,
    pub algorithm: Algorithm,
    pub hyper: Hyper,
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}({})", self.spec_id, self.algorithm, self.hyper)
    }
}

pub const BOOST_N_ESTIMATORS: [usize; 3] = [100, 250, 500];
pub const BOOST_MAX_DEPTH: [usize; 3] = [4, 7, 10];
pub const BOOST_LEARNING_RATE: [f64; 2] = [0.01, 0.1];
pub const SGD_ALPHA: [f64; 3] = [100.0, 250.0, 500.0];
pub const SGD_MAX_ITER: [usize; 2] = [10_000, 100_000];
pub const SGD_ETA0: [f64; 2] = [0.01, 0.1];
pub const MLP_ALPHA: [f64; 2] = [0.01, 0.1];
pub const MLP_MAX_ITER: [usize; 2] = [10_000, 100_000];

/// Size of the canonical learner space.
pub const SPACE_SIZE: usize = 60;

/// Hidden-layer sizes for `p` predictors: `p`, `⌈p/2⌉`, `⌈2p/3⌉`.
pub fn mlp_hidden_sizes(p: usize) -> [usize; 3] {
    let p = p.max(1);
    [p, p.div_ceil(2), (2 * p).div_ceil(3)]
}

/// The 60-spec learner space for `p` predictors.
pub fn learner_space(p: usize) -> Vec<LearnerSpec> {
    learner_space_with(p, &SGD_ALPHA)
}

/// As [`learner_space`] with a replacement SGD alpha grid.
pub fn learner_space_with(p: usize, sgd_alphas: &[f64]) -> Vec<LearnerSpec> {
    let mut out = Vec::new();
    let mut push = |algorithm, hyper| {
        out.push(LearnerSpec {
            spec_id: out.len(),
            algorithm,
            hyper,
        })
    };
    for algorithm in [Algorithm::BoostClassic, Algorithm::BoostNewton] {
        for n_estimators in BOOST_N_ESTIMATORS {
            for max_depth in BOOST_MAX_DEPTH {
                for learning_rate in BOOST_LEARNING_RATE {
                    push(
                        algorithm,
                        Hyper::Boost {
                            n_estimators,
                            max_depth,
                            learning_rate,
                        },
                    );
                }
            }
        }
    }
    for &alpha in sgd_alphas {
        for max_iter in SGD_MAX_ITER {
            for eta0 in SGD_ETA0 {
                push(Algorithm::SgdLinear, Hyper::Sgd { alpha, max_iter, eta0 });
            }
        }
    }
    for hidden_size in mlp_hidden_sizes(p) {
        for alpha in MLP_ALPHA {
            for max_iter in MLP_MAX_ITER {
                push(
                    Algorithm::Mlp,
                    Hyper::Mlp {
                        hidden_size,
                        alpha,
                        max_iter,
                    },
                );
            }
        }
    }
    out
}

/// Optional ceilings on training length, for desk-scale runs. `None`
/// leaves the spec's values untouched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitCaps {
    pub max_trees: Option<usize>,
    pub max_epochs: Option<usize>,
}

impl FitCaps {
    fn trees(&self, n: usize) -> usize {
        self.max_trees.map_or(n, |c| n.min(c.max(1)))
    }

    fn epochs(&self, n: usize) -> usize {
        self.max_epochs.map_or(n, |c| n.min(c.max(1)))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Boost(Ensemble),
    Linear(Linear),
    Mlp(MlpNet),
}

/// A fitted scorer over the encoded predictor space.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixModel {
    scaler: Option<Scaler>,
    fitted: Fitted,
}

impl MatrixModel {
    pub fn score_row(&self, x: &[f64]) -> f64 {
        match &self.fitted {
            Fitted::Boost(e) => e.predict_row(x),
            Fitted::Linear(l) => l.decision(x),
            Fitted::Mlp(n) => n.decision(x),
        }
    }

    pub fn score(&self, x: &Matrix) -> Vec<f64> {
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.apply(x);
                &scaled
            }
            None => x,
        };
        match &self.fitted {
            Fitted::Mlp(n) => n.decisions(x),
            _ => (0..x.rows).map(|i| self.score_row(x.row(i))).collect(),
        }
    }

    /// Number of boosting rounds kept, if this is a tree ensemble.
    pub fn n_trees(&self) -> Option<usize> {
        match &self.fitted {
            Fitted::Boost(e) => Some(e.trees.len()),
            _ => None,
        }
    }
}

/// Fits `spec` on encoded rows. `valid` drives early stopping.
pub fn fit_matrix(
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[u8],
    valid: Option<(&Matrix, &[u8])>,
    seed: u64,
    caps: FitCaps,
) -> Result<MatrixModel> {
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    match (spec.algorithm, spec.hyper) {
        (
            Algorithm::BoostClassic | Algorithm::BoostNewton,
            Hyper::Boost {
                n_estimators,
                max_depth,
                learning_rate,
            },
        ) => {
            let flavor = if spec.algorithm == Algorithm::BoostNewton {
                Flavor::Newton
            } else {
                Flavor::Classic
            };
            let params = BoostParams {
                flavor,
                n_estimators: caps.trees(n_estimators),
                max_depth,
                learning_rate,
            };
            Ok(MatrixModel {
                scaler: None,
                fitted: Fitted::Boost(boost::fit_boost(x, y, valid, params)),
            })
        }
        (Algorithm::SgdLinear, Hyper::Sgd { alpha, max_iter, eta0 }) => {
            let scaler = Scaler::fit(x);
            let xs = scaler.apply(x);
            let vs = valid.map(|(vx, vy)| (scaler.apply(vx), vy));
            let params = SgdParams {
                alpha,
                max_iter: caps.epochs(max_iter),
                eta0,
            };
            let lin = sgd::fit_sgd(&xs, y, vs.as_ref().map(|(m, l)| (m, *l)), params, seed);
            Ok(MatrixModel {
                scaler: Some(scaler),
                fitted: Fitted::Linear(lin),
            })
        }
        (
            Algorithm::Mlp,
            Hyper::Mlp {
                hidden_size,
                alpha,
                max_iter,
            },
        ) => {
            let scaler = Scaler::fit(x);
            let xs = scaler.apply(x);
            let vs = valid.map(|(vx, vy)| (scaler.apply(vx), vy));
            let params = MlpParams {
                hidden: hidden_size,
                alpha,
                max_iter: caps.epochs(max_iter),
            };
            let net = mlp::fit_mlp(&xs, y, vs.as_ref().map(|(m, l)| (m, *l)), params, seed);
            Ok(MatrixModel {
                scaler: Some(scaler),
                fitted: Fitted::Mlp(net),
            })
        }
        (a, h) => Err(Error::InvalidArgument(format!(
            "hyperparameters {h} do not belong to {a}"
        ))),
    }
}

/// A fitted model bound to the schema it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layout: Layout,
    inner: MatrixModel,
}

impl Model {
    pub fn inner(&self) -> &MatrixModel {
        &self.inner
    }
}

pub fn fit(spec: &LearnerSpec, train: &Dataset, valid: Option<&Dataset>, seed: u64) -> Result<Model> {
    fit_with(spec, train, valid, seed, FitCaps::default())
}

pub fn fit_with(
    spec: &LearnerSpec,
    train: &Dataset,
    valid: Option<&Dataset>,
    seed: u64,
    caps: FitCaps,
) -> Result<Model> {
    let layout = Layout::from_schema(train);
    let x = layout.encode(train)?;
    let y = train.labels();
    let v = match valid {
        Some(ds) => Some((layout.encode(ds)?, ds.labels())),
        None => None,
    };
    let inner = fit_matrix(spec, &x, &y, v.as_ref().map(|(m, l)| (m, l.as_slice())), seed, caps)?;
    Ok(Model { layout, inner })
}

/// One score per row; higher means more likely positive.
pub fn predict_scores(model: &Model, rows: &Dataset) -> Result<Vec<f64>> {
    let x = model.layout.encode(rows)?;
    Ok(model.inner.score(&x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub spec_id: usize,
    pub cv_auc_mean: f64,
    pub cv_auc_sd: f64,
    pub fold_scores: Vec<f64>,
    pub test_auc: Option<f64>,
    pub fit_seconds: f64,
    pub resource_fraction: f64,
}

/// Per-repeat fold assignment: `out[r][i]` is the fold of row `i` in
/// repeat `r`. Each class is shuffled and dealt round-robin, continuing the
/// deal across classes so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[u8], folds: usize, repeats: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("folds must be >= 2, got {folds}")));
    }
    if repeats < 1 {
        return Err(Error::InvalidArgument("repeats must be >= 1".into()));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[usize::from(l.min(1))].push(i);
    }
    for (c, rows) in by_class.iter().enumerate() {
        if rows.len() < folds {
            return Err(Error::ClassTooSmall(format!(
                "class {c} has {} rows, need at least {folds}",
                rows.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let mut rng = seed::rng(seed::derive_seed(seed, &["cv-repeat", &r.to_string()]));
        let mut assign = vec![0; labels.len()];
        let mut deal = 0;
        for rows in &by_class {
            let mut rows = rows.clone();
            rows.shuffle(&mut rng);
            for i in rows {
                assign[i] = deal % folds;
                deal += 1;
            }
        }
        out.push(assign);
    }
    Ok(out)
}

/// Stratified subsample of `rows` keeping `fraction` of each class, never
/// fewer than `min(2, class size)` per class. Returns sorted indices.
pub fn stratified_subsample(rows: &[usize], labels: &[u8], fraction: f64, seed: u64) -> Vec<usize> {
    if fraction >= 1.0 {
        return rows.to_vec();
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == class).collect();
        let c = members.len();
        let keep = ((c as f64 * fraction).round() as usize).max(c.min(2)).min(c);
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..keep]);
    }
    out.sort_unstable();
    out
}

/// Splits `rows` into (fit, validation) with `fraction` of each class in
/// validation, at least one per class when the class has two or more rows.
pub fn validation_carve(rows: &[usize], labels: &[u8], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seed::rng(seed);
    let mut fit_rows = Vec::new();
    let mut val_rows = Vec::new();
    for class in [0u8, 1] {
        let mut members: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let c = members.len();
        let take = if c >= 2 {
            ((c as f64 * fraction).round() as usize).clamp(1, c - 1)
        } else {
            0
        };
        val_rows.extend_from_slice(&members[..take]);
        fit_rows.extend_from_slice(&members[take..]);
    }
    fit_rows.sort_unstable();
    val_rows.sort_unstable();
    (fit_rows, val_rows)
}

/// A dataset encoded once for repeated cross-validation.
#[derive(Debug, Clone)]
pub struct CvData {
    pub x: Matrix,
    pub y: Vec<u8>,
    pub n_predictors: usize,
}

impl CvData {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let layout = Layout::from_schema(ds);
        Ok(CvData {
            x: layout.encode(ds)?,
            y: ds.labels(),
            n_predictors: layout.n_predictors(),
        })
    }

    /// Repeated stratified k-fold CV of an arbitrary scorer factory. `fit`
    /// receives (fit rows, labels, validation, seed) and returns the
    /// held-out fold's scores through the returned closure.
    pub fn cross_validate_by<F>(
        &self,
        folds: usize,
        repeats: usize,
        seed: u64,
        resource_fraction: f64,
        fit: F,
    ) -> Result<(Vec<f64>, f64)>
    where
        F: Fn(&Matrix, &[u8], Option<(&Matrix, &[u8])>, u64) -> Result<Box<dyn Fn(&Matrix) -> Vec<f64>>> + Sync,
    {
        if !(resource_fraction > 0.0 && resource_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "resource fraction {resource_fraction} outside (0, 1]"
            )));
        }
        let assign = stratified_folds(&self.y, folds, repeats, seed)?;
        let jobs: Vec<(usize, usize)> = (0..repeats).flat_map(|r| (0..folds).map(move |f| (r, f))).collect();
        let start = Instant::now();
        let scores: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|&(r, f)| {
                let tag = [r.to_string(), f.to_string()];
                let unit = |name: &str| seed::derive_seed(seed, &[name, &tag[0], &tag[1]]);
                let test: Vec<usize> = (0..self.y.len()).filter(|&i| assign[r][i] == f).collect();
                let train: Vec<usize> = (0..self.y.len()).filter(|&i| assign[r][i] != f).collect();
                let train = stratified_subsample(&train, &self.y, resource_fraction, unit("subsample"));
                let (fit_rows, val_rows) = validation_carve(&train, &self.y, VALIDATION_FRACTION, unit("valid"));
                let pick = |rows: &[usize]| -> (Matrix, Vec<u8>) {
                    (self.x.select(rows), rows.iter().map(|&i| self.y[i]).collect())
                };
                let (fx, fy) = pick(&fit_rows);
                let (vx, vy) = pick(&val_rows);
                let (tx, ty) = pick(&test);
                let valid = (!val_rows.is_empty()).then_some((&vx, vy.as_slice()));
                let scorer = fit(&fx, &fy, valid, unit("fit"))?;
                auc::<f64>(&scorer(&tx), &ty)
            })
            .collect();
        let elapsed = start.elapsed().as_secs_f64();
        Ok((scores.into_iter().collect::<Result<Vec<_>>>()?, elapsed))
    }

    pub fn cross_validate(
        &self,
        spec: &LearnerSpec,
        folds: usize,
        repeats: usize,
        seed: u64,
        resource_fraction: f64,
        caps: FitCaps,
    ) -> Result<EvalResult> {
        let spec = *spec;
        let (fold_scores, fit_seconds) =
            self.cross_validate_by(folds, repeats, seed, resource_fraction, move |x, y, v, s| {
                let m = fit_matrix(&spec, x, y, v, s, caps)?;
                Ok(Box::new(move |t: &Matrix| m.score(t)))
            })?;
        Ok(EvalResult {
            spec_id: spec.spec_id,
            cv_auc_mean: mean(&fold_scores),
            cv_auc_sd: sample_sd(&fold_scores),
            fold_scores,
            test_auc: None,
            fit_seconds,
            resource_fraction,
        })
    }
}

/// Repeated stratified cross-validation of one learner spec.
pub fn cross_validate(
    ds: &Dataset,
    spec: &LearnerSpec,
    folds: usize,
    repeats: usize,
    seed: u64,
    resource_fraction: f64,
) -> Result<EvalResult> {
    CvData::new(ds)?.cross_validate(spec, folds, repeats, seed, resource_fraction, FitCaps::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_layout() {
        let s = learner_space(10);
        assert_eq!(s.len(), SPACE_SIZE);
        let count = |a| s.iter().filter(|x| x.algorithm == a).count();
        assert_eq!(count(Algorithm::BoostClassic), 18);
        assert_eq!(count(Algorithm::BoostNewton), 18);
        assert_eq!(count(Algorithm::SgdLinear), 12);
        assert_eq!(count(Algorithm::Mlp), 12);
        assert!(s.iter().enumerate().all(|(i, x)| x.spec_id == i));
        assert_eq!(mlp_hidden_sizes(10), [10, 5, 7]);
        assert_eq!(mlp_hidden_sizes(7), [7, 4, 5]);
    }

    #[test]
    fn early_stopping_counts_flat_rounds() {
        let mut e = EarlyStopping::default();
        let stopped_at = (1..=100).find(|_| e.update(0.5)).unwrap();
        assert_eq!(stopped_at, 11);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<u8> = (0..53).map(|i| u8::from(i % 3 == 0)).collect();
        let a = stratified_folds(&labels, 5, 2, 9).unwrap();
        assert_eq!(a.len(), 2);
        for rep in &a {
            for f in 0..5 {
                let pos = (0..53).filter(|&i| rep[i] == f && labels[i] == 1).count();
                assert!((3..=4).contains(&pos), "{pos}");
            }
        }
        assert_ne!(a[0], a[1]);
        assert_eq!(a, stratified_folds(&labels, 5, 2, 9).unwrap());
        assert!(matches!(
            stratified_folds(&[0, 0, 0, 0, 0, 1, 1], 5, 1, 0),
            Err(Error::ClassTooSmall(_))
        ));
    }

    #[test]
    fn subsample_and_carve() {
        let labels: Vec<u8> = (0..90).map(|i| u8::from(i < 30)).collect();
        let rows: Vec<usize> = (0..90).collect();
        let s = stratified_subsample(&rows, &labels, 1.0 / 3.0, 1);
        assert_eq!(s.len(), 30);
        assert_eq!(s.iter().filter(|&&i| labels[i] == 1).count(), 10);
        let tiny = stratified_subsample(&rows, &labels, 0.001, 1);
        assert_eq!(tiny.len(), 4);
        let (f, v) = validation_carve(&rows, &labels, 0.1, 2);
        assert_eq!(v.len(), 9);
        assert_eq!(f.len() + v.len(), 90);
        assert!(v.iter().any(|&i| labels[i] == 1));
    }
}
