//! Twin linear meta-models and the averaged-rank recommender.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metafeat::{self, MetaFeatureVector, MF_VERSION, N_FEATURES};
use crate::scalar::{fractional_ranks, total_cmp, Scalar};
use crate::synth::{enumerate_config_grid, PrivacyConfig, Technique};
use crate::tabular::Dataset;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-8;

/// One training row: protected-variant features and measured outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRow {
    pub dataset: String,
    pub qi_id: usize,
    pub config_id: usize,
    pub features: Vec<f64>,
    pub y_perf: f64,
    pub y_link: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaTarget {
    Performance,
    Linkability,
}

impl fmt::Display for MetaTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaTarget::Performance => "performance",
            MetaTarget::Linkability => "linkability",
        })
    }
}

/// Ridge regression on standardized features with an unpenalized
/// intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel<T> {
    pub target: MetaTarget,
    pub mf_version: String,
    pub intercept: T,
    /// Coefficients on the standardized features.
    pub coefficients: Vec<T>,
    pub feature_means: Vec<T>,
    pub feature_sds: Vec<T>,
    pub ridge_lambda: T,
}

impl<T: Scalar> MetaModel<T> {
    /// Coefficients and intercept mapped back to unscaled features.
    pub fn raw_coefficients(&self) -> (Vec<T>, T) {
        let beta: Vec<T> = self
            .coefficients
            .iter()
            .zip(&self.feature_sds)
            .map(|(&b, &s)| b / s)
            .collect();
        let shift = beta
            .iter()
            .zip(&self.feature_means)
            .fold(T::zero(), |acc, (&b, &m)| acc + b * m);
        (beta, self.intercept - shift)
    }

    pub fn n_features(&self) -> usize {
        self.coefficients.len()
    }
}

/// Solves `min ‖A x − b‖²` for tall `A` (row-major, `m × n`, `m ≥ n`) by
/// Householder QR. Columns whose pivot vanishes get a zero coefficient.
pub fn least_squares_qr<T: Scalar>(a: &[T], m: usize, n: usize, b: &[T]) -> Vec<T> {
    assert!(m >= n, "least squares needs at least as many rows as columns");
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    let mut diag = vec![T::zero(); n];
    for k in 0..n {
        let mut norm = T::zero();
        for i in k..m {
            norm = norm + a[idx(i, k)] * a[idx(i, k)];
        }
        let norm = norm.sqrt();
        if norm == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        let alpha = if a[idx(k, k)] > T::zero() { -norm } else { norm };
        // v = x − alpha e1, stored in place
        a[idx(k, k)] = a[idx(k, k)] - alpha;
        let mut vnorm2 = T::zero();
        for i in k..m {
            vnorm2 = vnorm2 + a[idx(i, k)] * a[idx(i, k)];
        }
        if vnorm2 > T::zero() {
            for j in k + 1..n {
                let mut dot = T::zero();
                for i in k..m {
                    dot = dot + a[idx(i, k)] * a[idx(i, j)];
                }
                let f = (dot + dot) / vnorm2;
                for i in k..m {
                    a[idx(i, j)] = a[idx(i, j)] - f * a[idx(i, k)];
                }
            }
            let mut dot = T::zero();
            for i in k..m {
                dot = dot + a[idx(i, k)] * b[i];
            }
            let f = (dot + dot) / vnorm2;
            for i in k..m {
                b[i] = b[i] - f * a[idx(i, k)];
            }
        }
        diag[k] = alpha;
    }
    let scale = diag.iter().fold(T::zero(), |acc, d| acc.max(d.abs()));
    let tol = scale * T::epsilon() * T::from_usize_lossy(m.max(n));
    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        if diag[k].abs() <= tol {
            continue;
        }
        let mut s = b[k];
        for j in k + 1..n {
            s = s - a[idx(k, j)] * x[j];
        }
        x[k] = s / diag[k];
    }
    x
}

/// Fits a meta-model on a dense feature block.
pub fn fit_meta_matrix<T: Scalar>(
    features: &[Vec<T>],
    y: &[T],
    target: MetaTarget,
    ridge_lambda: T,
) -> Result<MetaModel<T>> {
    let m = features.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("meta-model needs >= 2 rows, got {m}")));
    }
    if y.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{m} feature rows for {} targets",
            y.len()
        )));
    }
    if ridge_lambda < T::zero() {
        return Err(Error::InvalidArgument("ridge lambda must be >= 0".into()));
    }
    let p = features[0].len();
    if features.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidArgument("ragged feature rows".into()));
    }
    let mf = T::from_usize_lossy(m);
    let mut means = vec![T::zero(); p];
    for row in features {
        for (acc, &v) in means.iter_mut().zip(row) {
            *acc = *acc + v;
        }
    }
    means.iter_mut().for_each(|v| *v = *v / mf);
    let mut sds = vec![T::zero(); p];
    for row in features {
        for ((acc, &v), &mu) in sds.iter_mut().zip(row).zip(&means) {
            *acc = *acc + (v - mu) * (v - mu);
        }
    }
    let guard = T::lit(1e-12);
    sds.iter_mut().for_each(|s| {
        let sd = (*s / mf).sqrt();
        *s = if sd > guard { sd } else { T::one() };
    });
    let y_mean = y.iter().fold(T::zero(), |a, &v| a + v) / mf;

    // augmented system [Z; sqrt(λ) I] β = [y − ȳ; 0]
    let rows = m + p;
    let mut a = vec![T::zero(); rows * p];
    let mut b = vec![T::zero(); rows];
    for (i, row) in features.iter().enumerate() {
        for j in 0..p {
            a[i * p + j] = (row[j] - means[j]) / sds[j];
        }
        b[i] = y[i] - y_mean;
    }
    let root = ridge_lambda.sqrt();
    for j in 0..p {
        a[(m + j) * p + j] = root;
    }
    let coefficients = if p == 0 {
        Vec::new()
    } else {
        least_squares_qr(&a, rows, p, &b)
    };
    Ok(MetaModel {
        target,
        mf_version: MF_VERSION.to_string(),
        intercept: y_mean,
        coefficients,
        feature_means: means,
        feature_sds: sds,
        ridge_lambda,
    })
}

pub fn fit_meta(rows: &[MetaRow], target: MetaTarget, ridge_lambda: f64) -> Result<MetaModel<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.features.len() != N_FEATURES) {
        return Err(Error::InvalidArgument(format!(
            "meta row {}/{}/{} has {} features, expected {N_FEATURES}",
            bad.dataset,
            bad.qi_id,
            bad.config_id,
            bad.features.len()
        )));
    }
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.clone()).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| match target {
            MetaTarget::Performance => r.y_perf,
            MetaTarget::Linkability => r.y_link,
        })
        .collect();
    fit_meta_matrix(&x, &y, target, ridge_lambda)
}

/// Raw linear predictions, unclipped.
pub fn predict_meta<T: Scalar>(model: &MetaModel<T>, rows: &[Vec<T>]) -> Result<Vec<T>> {
    rows.iter()
        .map(|r| {
            if r.len() != model.coefficients.len() {
                return Err(Error::InvalidArgument(format!(
                    "feature row has {} values, model expects {}",
                    r.len(),
                    model.coefficients.len()
                )));
            }
            Ok(r.iter()
                .zip(&model.coefficients)
                .zip(model.feature_means.iter().zip(&model.feature_sds))
                .fold(model.intercept, |acc, ((&x, &b), (&mu, &sd))| acc + (x - mu) / sd * b))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig<T> {
    pub config: PrivacyConfig,
    pub pred_perf: T,
    pub pred_link: T,
    pub perf_rank: T,
    pub link_rank: T,
    pub avg_rank: T,
}

/// Fractional ranks (higher is better) averaged over the two criteria;
/// sorted by `avg_rank` desc, then `pred_perf` desc, then `config_id` asc.
pub fn rank_configs<T: Scalar>(
    configs: &[PrivacyConfig],
    pred_perf: &[T],
    pred_link: &[T],
    top_n: usize,
) -> Result<Vec<RankedConfig<T>>> {
    if configs.len() != pred_perf.len() || configs.len() != pred_link.len() {
        return Err(Error::InvalidArgument("prediction columns differ in length".into()));
    }
    let perf_rank = fractional_ranks(pred_perf);
    let neg_link: Vec<T> = pred_link.iter().map(|&v| -v).collect();
    let link_rank = fractional_ranks(&neg_link);
    let mut out: Vec<RankedConfig<T>> = configs
        .iter()
        .enumerate()
        .map(|(i, c)| RankedConfig {
            config: *c,
            pred_perf: pred_perf[i],
            pred_link: pred_link[i],
            perf_rank: perf_rank[i],
            link_rank: link_rank[i],
            avg_rank: (perf_rank[i] + link_rank[i]) * T::half(),
        })
        .collect();
    out.sort_by(ranked_order);
    out.truncate(top_n);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub dataset: String,
    pub mf_version: String,
    pub candidates: usize,
    pub meta_features: MetaFeatureVector,
    pub ranked: Vec<RankedConfig<f64>>,
}

impl Recommendation {
    /// Fixed-width table: technique, N, knn, ε, predictions and rank.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>4}  {:<13} {:>3} {:>3} {:>6} {:>10} {:>10} {:>8}\n",
            "rank", "technique", "N", "knn", "eps", "pred_auc", "pred_link", "avg_rank"
        );
        let opt = |v: Option<u32>| v.map_or("-".to_string(), |v| v.to_string());
        for (i, r) in self.ranked.iter().enumerate() {
            let p = &r.config.params;
            s.push_str(&format!(
                "{:>4}  {:<13} {:>3} {:>3} {:>6} {:>10.4} {:>10.4} {:>8.2}\n",
                i + 1,
                r.config.technique.to_string(),
                opt(p.n),
                opt(p.knn),
                p.epsilon.map_or("-".to_string(), |e| e.to_string()),
                r.pred_perf,
                r.pred_link,
                r.avg_rank
            ));
        }
        s
    }
}

/// Ranks the configuration grid for an unseen dataset. `techniques`
/// restricts the candidates, e.g. to the techniques the models saw.
pub fn recommend(
    new_ds: &Dataset,
    model_perf: &MetaModel<f64>,
    model_link: &MetaModel<f64>,
    top_n: usize,
    seed: u64,
    techniques: Option<&[Technique]>,
) -> Result<Recommendation> {
    if model_perf.target != MetaTarget::Performance || model_link.target != MetaTarget::Linkability {
        return Err(Error::InvalidArgument(
            "recommend needs a performance model and a linkability model".into(),
        ));
    }
    for m in [model_perf, model_link] {
        if m.mf_version != MF_VERSION {
            return Err(Error::InvalidArgument(format!(
                "model built with meta-features `{}`, this build uses `{MF_VERSION}`",
                m.mf_version
            )));
        }
    }
    let mf = metafeat::extract(new_ds, seed);
    let configs: Vec<PrivacyConfig> = enumerate_config_grid()
        .into_iter()
        .filter(|c| techniques.is_none_or(|t| t.contains(&c.technique)))
        .collect();
    if configs.is_empty() {
        return Err(Error::InvalidArgument("no candidate configurations".into()));
    }
    let block: Vec<Vec<f64>> = configs.iter().map(|c| metafeat::feature_row(&mf, c)).collect();
    let perf = predict_meta(model_perf, &block)?;
    let link = predict_meta(model_link, &block)?;
    let ranked = rank_configs(&configs, &perf, &link, top_n)?;
    Ok(Recommendation {
        dataset: new_ds.name().to_string(),
        mf_version: MF_VERSION.to_string(),
        candidates: configs.len(),
        meta_features: mf,
        ranked,
    })
}

/// Orders two ranked rows the way [`rank_configs`] does.
pub fn ranked_order<T: Scalar>(a: &RankedConfig<T>, b: &RankedConfig<T>) -> Ordering {
    total_cmp(&b.avg_rank, &a.avg_rank)
        .then_with(|| total_cmp(&b.pred_perf, &a.pred_perf))
        .then_with(|| a.config.config_id.cmp(&b.config.config_id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_square_system() {
        // [[2,1],[1,3]] x = [3,5] -> x = (0.8, 1.4)
        let x = least_squares_qr(&[2.0, 1.0, 1.0, 3.0], 2, 2, &[3.0, 5.0]);
        assert!((x[0] - 0.8f64).abs() < 1e-12 && (x[1] - 1.4f64).abs() < 1e-12);
    }

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = fit_meta_matrix(&x, &[0.7; 5], MetaTarget::Performance, 1e-8).unwrap();
        assert_eq!(m.intercept, 0.7);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert!(fit_meta_matrix(&x[..1], &[0.7], MetaTarget::Performance, 1e-8).is_err());
    }

    #[test]
    fn worked_ranking() {
        let grid = enumerate_config_grid();
        let cfgs = &grid[..4];
        let r = rank_configs(cfgs, &[0.6, 0.6, 0.5, 0.4], &[0.1, 0.2, 0.1, 0.3], 10).unwrap();
        let ids: Vec<usize> = r.iter().map(|x| x.config.config_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3]);
        let avg: Vec<f64> = r.iter().map(|x| x.avg_rank).collect();
        assert_eq!(avg, vec![3.5, 2.75, 2.75, 1.0]);
    }
}
