//! Dataset meta-features (23 closed-form descriptors) and the 11-slot
//! privacy-configuration encoding.
//!
//! Moments use min-max normalized numeric predictors and population
//! statistics. Entropies are in bits; numeric columns are cut into 10
//! equal-width bins. Undefined statistics are reported as 0.

use serde::{Deserialize, Serialize};

use crate::gower::GowerScale;
use crate::learning::auc_opt;
use crate::scalar::{mean, pop_sd};
use crate::seed;
use crate::synth::{PrivacyConfig, Technique};
use crate::tabular::{ColumnData, Dataset};

pub const MF_VERSION: &str = "mf-v1";
pub const N_META_FEATURES: usize = 23;
pub const N_CONFIG_SLOTS: usize = 11;
pub const N_FEATURES: usize = N_META_FEATURES + N_CONFIG_SLOTS;
pub const ENTROPY_BINS: usize = 10;
/// Share of each class used to train the landmarkers.
pub const LANDMARK_TRAIN_FRACTION: f64 = 0.7;

pub const META_FEATURE_NAMES: [&str; N_META_FEATURES] = [
    "n_rows",
    "n_predictors",
    "dim_ratio",
    "frac_numeric",
    "frac_categorical",
    "minority_fraction",
    "mean_of_means",
    "sd_of_means",
    "mean_of_sds",
    "sd_of_sds",
    "mean_skewness",
    "sd_skewness",
    "mean_kurtosis",
    "sd_kurtosis",
    "mean_abs_corr",
    "sd_abs_corr",
    "class_entropy",
    "mean_attr_entropy",
    "sd_attr_entropy",
    "mean_mutual_info",
    "noise_signal_ratio",
    "nn1_auc",
    "stump_auc",
];

pub const CONFIG_SLOT_NAMES: [&str; N_CONFIG_SLOTS] = [
    "tech_copulagan",
    "tech_tvae",
    "tech_ctgan",
    "tech_dpgan",
    "tech_pategan",
    "tech_privatesmote",
    "cfg_epochs",
    "cfg_batch_size",
    "cfg_epsilon",
    "cfg_n",
    "cfg_knn",
];

/// All 34 feature names in persisted order.
pub fn feature_names() -> Vec<&'static str> {
    META_FEATURE_NAMES
        .iter()
        .chain(CONFIG_SLOT_NAMES.iter())
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFeatureVector {
    pub values: Vec<f64>,
}

impl MetaFeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        META_FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

/// Technique one-hot followed by `epochs, batch_size, epsilon, N, knn`,
/// zero where a parameter does not apply.
pub fn encode_config(config: &PrivacyConfig) -> [f64; N_CONFIG_SLOTS] {
    let mut out = [0.0; N_CONFIG_SLOTS];
    out[config.technique.slot()] = 1.0;
    let p = &config.params;
    out[6] = p.epochs.map_or(0.0, f64::from);
    out[7] = p.batch_size.map_or(0.0, f64::from);
    out[8] = p.epsilon.unwrap_or(0.0);
    out[9] = p.n.map_or(0.0, f64::from);
    out[10] = p.knn.map_or(0.0, f64::from);
    debug_assert_eq!(Technique::ALL.len(), 6);
    out
}

/// Meta-features followed by the config encoding.
pub fn feature_row(mf: &MetaFeatureVector, config: &PrivacyConfig) -> Vec<f64> {
    let mut row = mf.values.clone();
    row.extend_from_slice(&encode_config(config));
    row
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

fn entropy_bits(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// `H(X) + H(Y) − H(X, Y)` from discrete codes.
fn mutual_info_bits(x: &[usize], x_card: usize, y: &[u8]) -> f64 {
    let mut joint = vec![0usize; x_card * 2];
    let mut mx = vec![0usize; x_card];
    let mut my = [0usize; 2];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * 2 + usize::from(b)] += 1;
        mx[a] += 1;
        my[usize::from(b)] += 1;
    }
    (entropy_bits(&mx) + entropy_bits(&my) - entropy_bits(&joint)).max(0.0)
}

/// Min-max normalization; constant columns map to 0.
fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        v.iter().map(|x| (x - lo) / range).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn central_moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let m = mean(v);
    let n = v.len().max(1) as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in v {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (m, m2 / n, m3 / n, m4 / n)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        (0.0, 0.0)
    } else {
        (mean(v), pop_sd(v))
    }
}

/// Seeded hash of a row's content, independent of its position.
fn row_hash(ds: &Dataset, row: usize, seed: u64) -> u64 {
    let key: String = ds.row_key(row).iter().map(|k| format!("{k:016x}")).collect();
    seed::derive_seed(seed, &["landmark", &key])
}

/// Per class, rows ordered by content hash; the first 70% train the
/// landmarkers. Row order of `ds` has no influence.
fn landmark_split(ds: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let labels = ds.labels();
    let hashes: Vec<u64> = (0..ds.n_rows()).map(|i| row_hash(ds, i, seed)).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| labels[i] == class).collect();
        rows.sort_by_key(|&i| (hashes[i], ds.row_key(i)));
        let k = (rows.len() as f64 * LANDMARK_TRAIN_FRACTION).round() as usize;
        let k = if rows.len() >= 2 {
            k.clamp(1, rows.len() - 1)
        } else {
            rows.len()
        };
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    (train, test)
}

fn nn1_auc(ds: &Dataset, train: &[usize], test: &[usize], seed: u64) -> f64 {
    if train.is_empty() || test.is_empty() {
        return 0.0;
    }
    let labels = ds.labels();
    let preds = ds.predictor_indices();
    let scale = GowerScale::new(ds, &preds);
    let view = scale.view::<f64>(ds);
    let tie: Vec<(u64, Vec<u64>)> = train.iter().map(|&i| (row_hash(ds, i, seed), ds.row_key(i))).collect();
    let scores: Vec<f64> = test
        .iter()
        .map(|&t| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, &r) in train.iter().enumerate() {
                let d = view.distance(t, &view, r);
                if d < best_d || (d == best_d && tie[j] < tie[best]) {
                    best = j;
                    best_d = d;
                }
            }
            f64::from(labels[train[best]])
        })
        .collect();
    let y: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
    auc_opt(&scores, &y).unwrap_or(0.0)
}

/// AUC of a two-leaf scorer from leaf counts `(pos, neg)`.
fn two_leaf_auc(l: (f64, f64), r: (f64, f64)) -> f64 {
    let (p, n) = (l.0 + r.0, l.1 + r.1);
    if p == 0.0 || n == 0.0 {
        return 0.5;
    }
    let rate = |c: (f64, f64)| if c.0 + c.1 > 0.0 { c.0 / (c.0 + c.1) } else { 0.0 };
    let (hi, lo) = if rate(l) >= rate(r) { (l, r) } else { (r, l) };
    if rate(l) == rate(r) {
        return 0.5;
    }
    (hi.0 * lo.1 + 0.5 * (hi.0 * hi.1 + lo.0 * lo.1)) / (p * n)
}

#[derive(Clone, Copy)]
enum Stump {
    Num { col: usize, threshold: f64 },
    Cat { col: usize, code: u32 },
}

impl Stump {
    fn left(&self, ds: &Dataset, row: usize) -> bool {
        match *self {
            Stump::Num { col, threshold } => ds.column(col).as_numeric().expect("numeric")[row] <= threshold,
            Stump::Cat { col, code } => ds.column(col).as_codes().expect("categorical").1[row] == code,
        }
    }
}

/// Best single split on the training rows (by training AUC), scored on
/// the test rows by the training leaf rates.
fn stump_auc(ds: &Dataset, train: &[usize], test: &[usize]) -> f64 {
    if train.is_empty() || test.is_empty() {
        return 0.0;
    }
    let labels = ds.labels();
    let mut best: Option<(f64, Stump)> = None;
    let mut consider = |a: f64, s: Stump| {
        if best.as_ref().is_none_or(|(b, _)| a > *b) {
            best = Some((a, s));
        }
    };
    let total = train.iter().fold((0.0, 0.0), |c, &i| {
        if labels[i] == 1 {
            (c.0 + 1.0, c.1)
        } else {
            (c.0, c.1 + 1.0)
        }
    });
    for col in ds.predictor_indices() {
        match &ds.column(col).data {
            ColumnData::Numeric(v) => {
                let mut rows: Vec<usize> = train.to_vec();
                rows.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
                let mut left = (0.0, 0.0);
                for w in 0..rows.len().saturating_sub(1) {
                    let i = rows[w];
                    if labels[i] == 1 {
                        left.0 += 1.0;
                    } else {
                        left.1 += 1.0;
                    }
                    let (a, b) = (v[i], v[rows[w + 1]]);
                    if a < b {
                        let right = (total.0 - left.0, total.1 - left.1);
                        consider(
                            two_leaf_auc(left, right),
                            Stump::Num {
                                col,
                                threshold: 0.5 * (a + b),
                            },
                        );
                    }
                }
            }
            ColumnData::Categorical { levels, codes } => {
                for code in 0..levels.len() as u32 {
                    let left = train.iter().filter(|&&i| codes[i] == code).fold((0.0, 0.0), |c, &i| {
                        if labels[i] == 1 {
                            (c.0 + 1.0, c.1)
                        } else {
                            (c.0, c.1 + 1.0)
                        }
                    });
                    if left.0 + left.1 == 0.0 || left == total {
                        continue;
                    }
                    let right = (total.0 - left.0, total.1 - left.1);
                    consider(two_leaf_auc(left, right), Stump::Cat { col, code });
                }
            }
        }
    }
    let Some((_, stump)) = best else {
        return 0.5;
    };
    let leaf_rate = |side: bool| {
        let (p, n) = train
            .iter()
            .filter(|&&i| stump.left(ds, i) == side)
            .fold((0.0, 0.0), |c, &i| {
                if labels[i] == 1 {
                    (c.0 + 1.0, c.1)
                } else {
                    (c.0, c.1 + 1.0)
                }
            });
        if p + n > 0.0 {
            p / (p + n)
        } else {
            0.0
        }
    };
    let (rl, rr) = (leaf_rate(true), leaf_rate(false));
    let scores: Vec<f64> = test.iter().map(|&i| if stump.left(ds, i) { rl } else { rr }).collect();
    let y: Vec<u8> = test.iter().map(|&i| labels[i]).collect();
    auc_opt(&scores, &y).unwrap_or(0.0)
}

/// Extracts the 23 meta-features. `seed` only affects the landmarkers'
/// train/test split.
pub fn extract(ds: &Dataset, seed: u64) -> MetaFeatureVector {
    let n = ds.n_rows();
    let preds = ds.predictor_indices();
    let p = preds.len();
    let labels = ds.labels();
    let counts = ds.class_counts();

    let mut numeric: Vec<Vec<f64>> = Vec::new();
    let mut entropies = Vec::with_capacity(p);
    let mut mis = Vec::with_capacity(p);
    for &c in &preds {
        let (codes, card): (Vec<usize>, usize) = match &ds.column(c).data {
            ColumnData::Numeric(v) => {
                let z = normalize(v);
                let bins = z
                    .iter()
                    .map(|x| ((x * ENTROPY_BINS as f64) as usize).min(ENTROPY_BINS - 1))
                    .collect();
                numeric.push(z);
                (bins, ENTROPY_BINS)
            }
            ColumnData::Categorical { levels, codes } => {
                (codes.iter().map(|&k| k as usize).collect(), levels.len().max(1))
            }
        };
        let mut hist = vec![0usize; card];
        for &k in &codes {
            hist[k] += 1;
        }
        entropies.push(entropy_bits(&hist));
        mis.push(mutual_info_bits(&codes, card, &labels));
    }

    let mut means = Vec::new();
    let mut sds = Vec::new();
    let mut skews = Vec::new();
    let mut kurts = Vec::new();
    for z in &numeric {
        let (m, m2, m3, m4) = central_moments(z);
        means.push(m);
        sds.push(m2.sqrt());
        if m2 > 0.0 {
            skews.push(m3 / m2.powf(1.5));
            kurts.push(m4 / (m2 * m2) - 3.0);
        } else {
            skews.push(0.0);
            kurts.push(0.0);
        }
    }
    let mut corrs = Vec::new();
    for a in 0..numeric.len() {
        for b in a + 1..numeric.len() {
            corrs.push(pearson(&numeric[a], &numeric[b]).abs());
        }
    }

    let (mean_of_means, sd_of_means) = mean_sd(&means);
    let (mean_of_sds, sd_of_sds) = mean_sd(&sds);
    let (mean_skewness, sd_skewness) = mean_sd(&skews);
    let (mean_kurtosis, sd_kurtosis) = mean_sd(&kurts);
    let (mean_abs_corr, sd_abs_corr) = mean_sd(&corrs);
    let (mean_attr_entropy, sd_attr_entropy) = mean_sd(&entropies);
    let (mean_mutual_info, _) = mean_sd(&mis);
    let noise_signal_ratio = (mean_attr_entropy - mean_mutual_info) / mean_mutual_info.max(1e-12);

    let (train, test) = landmark_split(ds, seed);
    let nn1 = nn1_auc(ds, &train, &test, seed);
    let stump = stump_auc(ds, &train, &test);

    let nf = n as f64;
    let values = vec![
        nf,
        p as f64,
        if n > 0 { p as f64 / nf } else { 0.0 },
        if p > 0 { numeric.len() as f64 / p as f64 } else { 0.0 },
        if p > 0 {
            (p - numeric.len()) as f64 / p as f64
        } else {
            0.0
        },
        if n > 0 {
            counts[0].min(counts[1]) as f64 / nf
        } else {
            0.0
        },
        mean_of_means,
        sd_of_means,
        mean_of_sds,
        sd_of_sds,
        mean_skewness,
        sd_skewness,
        mean_kurtosis,
        sd_kurtosis,
        mean_abs_corr,
        sd_abs_corr,
        entropy_bits(&counts),
        mean_attr_entropy,
        sd_attr_entropy,
        mean_mutual_info,
        noise_signal_ratio,
        nn1,
        stump,
    ];
    MetaFeatureVector {
        values: values.into_iter().map(finite_or_zero).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::enumerate_config_grid;
    use crate::tabular::Column;

    fn four_rows() -> Dataset {
        Dataset::new(
            "four",
            vec![
                Column::numeric("a", vec![0.0, 1.0, 2.0, 4.0]),
                Column::numeric("b", vec![3.0, 3.0, 5.0, 5.0]),
                Column::categorical("class", &["n", "y", "n", "y"]),
            ],
            "class",
        )
        .unwrap()
    }

    #[test]
    fn hand_computed_features() {
        let mf = extract(&four_rows(), 1);
        assert_eq!(mf.values.len(), N_META_FEATURES);
        // normalized a = (0, .25, .5, 1) mean .4375; b = (0, 0, 1, 1) mean .5
        assert!((mf.get("mean_of_means").unwrap() - 0.46875).abs() < 1e-12);
        assert!((mf.get("class_entropy").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mf.get("n_rows"), Some(4.0));
        assert_eq!(mf.get("frac_numeric"), Some(1.0));
        assert_eq!(mf.get("minority_fraction"), Some(0.5));
    }

    #[test]
    fn encodings_distinct() {
        let grid = enumerate_config_grid();
        let enc: Vec<[f64; 11]> = grid.iter().map(encode_config).collect();
        for i in 0..enc.len() {
            assert_eq!(enc[i][..6].iter().sum::<f64>(), 1.0);
            for j in i + 1..enc.len() {
                assert_ne!(enc[i], enc[j]);
            }
        }
        assert_eq!(feature_names().len(), N_FEATURES);
    }
}
