//! Equivalence classes over quasi-identifiers and highest-risk selection.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tabular::Dataset;

/// Records whose QI tuple occurs at most this many times are highest-risk.
pub const HIGHEST_RISK_MAX_K: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QiSet {
    pub id: usize,
    pub columns: Vec<String>,
}

impl QiSet {
    pub fn new(id: usize, columns: Vec<String>) -> Self {
        QiSet { id, columns }
    }

    /// Column indices in `ds`, validating the set against its schema.
    pub fn resolve(&self, ds: &Dataset) -> Result<Vec<usize>> {
        if self.columns.is_empty() {
            return Err(Error::InvalidArgument("empty QI set".into()));
        }
        let mut seen = BTreeSet::new();
        let mut idx = Vec::with_capacity(self.columns.len());
        for name in &self.columns {
            let c = ds.column_index(name)?;
            if c == ds.target_index() {
                return Err(Error::InvalidArgument(format!(
                    "QI set includes target column `{name}`"
                )));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidArgument(format!("duplicate QI column `{name}`")));
            }
            idx.push(c);
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    /// Equivalence-class size of each record.
    pub k: Vec<usize>,
    pub highest_risk: Vec<usize>,
    pub k_histogram: BTreeMap<usize, usize>,
}

impl RiskProfile {
    pub fn min_k(&self) -> Option<usize> {
        self.k.iter().copied().min()
    }
}

pub fn equivalence_classes(ds: &Dataset, qis: &QiSet) -> Result<RiskProfile> {
    let cols = qis.resolve(ds)?;
    let keys: Vec<Vec<u64>> = (0..ds.n_rows())
        .map(|r| cols.iter().map(|&c| ds.value(r, c).key()).collect())
        .collect();
    let mut counts: HashMap<&[u64], usize> = HashMap::new();
    for key in &keys {
        *counts.entry(key.as_slice()).or_default() += 1;
    }
    let k: Vec<usize> = keys.iter().map(|key| counts[key.as_slice()]).collect();
    let highest_risk = k
        .iter()
        .enumerate()
        .filter(|(_, &kk)| kk <= HIGHEST_RISK_MAX_K)
        .map(|(i, _)| i)
        .collect();
    let mut k_histogram = BTreeMap::new();
    for &kk in &k {
        *k_histogram.entry(kk).or_default() += 1;
    }
    Ok(RiskProfile {
        k,
        highest_risk,
        k_histogram,
    })
}

pub fn select_highest_risk(ds: &Dataset, qis: &QiSet) -> Result<Vec<usize>> {
    Ok(equivalence_classes(ds, qis)?.highest_risk)
}

/// QI-set size for `p` predictors: round half up, at least one column.
pub fn qi_set_size(p: usize, fraction: f64) -> usize {
    ((fraction * p as f64).round() as usize).clamp(1, p.max(1))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

const ENUMERATE_LIMIT: u128 = 20_000;

/// Draws `count` distinct QI sets, each a random `fraction` of the predictors.
pub fn sample_qi_sets(ds: &Dataset, count: usize, fraction: f64, seed: u64) -> Result<Vec<QiSet>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("QI fraction {fraction} outside (0, 1]")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("QI set count must be >= 1".into()));
    }
    let predictors = ds.predictor_indices();
    let p = predictors.len();
    if p == 0 {
        return Err(Error::InvalidDataset("no predictor columns".into()));
    }
    let m = qi_set_size(p, fraction);
    let possible = binomial(p, m);
    if count as u128 > possible {
        return Err(Error::InvalidArgument(format!(
            "{count} QI sets requested but only {possible} distinct sets of size {m} exist"
        )));
    }
    let mut rng = seed::rng(seed);
    let picks: Vec<Vec<usize>> = if possible <= ENUMERATE_LIMIT {
        let mut all = combinations(p, m);
        all.shuffle(&mut rng);
        all.truncate(count);
        all
    } else {
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let mut s = index::sample(&mut rng, p, m).into_vec();
            s.sort_unstable();
            if seen.insert(s.clone()) {
                out.push(s);
            }
        }
        out
    };
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(id, pos)| {
            QiSet::new(
                id,
                pos.into_iter().map(|i| ds.column(predictors[i]).name.clone()).collect(),
            )
        })
        .collect())
}

/// JSON report emitted by the `profile` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileReport {
    pub qi_set: QiSet,
    pub n: usize,
    pub k_histogram: BTreeMap<usize, usize>,
    pub highest_risk_count: usize,
    pub highest_risk_fraction: f64,
}

pub fn profile_report(ds: &Dataset, qis: &QiSet) -> Result<ProfileReport> {
    let prof = equivalence_classes(ds, qis)?;
    let n = ds.n_rows();
    Ok(ProfileReport {
        qi_set: qis.clone(),
        n,
        highest_risk_count: prof.highest_risk.len(),
        highest_risk_fraction: if n == 0 {
            0.0
        } else {
            prof.highest_risk.len() as f64 / n as f64
        },
        k_histogram: prof.k_histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    fn qi_table(tokens: &[&str]) -> Dataset {
        let y: Vec<&str> = (0..tokens.len()).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        Dataset::new(
            "q",
            vec![Column::categorical("q", tokens), Column::categorical("y", &y)],
            "y",
        )
        .unwrap()
    }

    fn q() -> QiSet {
        QiSet::new(0, vec!["q".into()])
    }

    #[test]
    fn all_distinct_rows_are_all_risky() {
        let ds = qi_table(&["a", "b", "c", "d"]);
        let p = equivalence_classes(&ds, &q()).unwrap();
        assert_eq!(p.k, vec![1; 4]);
        assert_eq!(p.highest_risk, vec![0, 1, 2, 3]);
    }

    #[test]
    fn single_class_of_ten_is_safe() {
        let ds = qi_table(&["z"; 10]);
        let p = equivalence_classes(&ds, &q()).unwrap();
        assert_eq!(p.k, vec![10; 10]);
        assert!(p.highest_risk.is_empty());
        assert_eq!(p.k_histogram, BTreeMap::from([(10, 10)]));
    }

    #[test]
    fn six_row_example() {
        let ds = qi_table(&["a", "a", "b", "b", "b", "c"]);
        let p = equivalence_classes(&ds, &q()).unwrap();
        assert_eq!(p.k, vec![2, 2, 3, 3, 3, 1]);
        assert_eq!(select_highest_risk(&ds, &q()).unwrap(), vec![0, 1, 5]);
    }

    #[test]
    fn invalid_qi_sets() {
        let ds = qi_table(&["a", "b"]);
        assert!(matches!(
            equivalence_classes(&ds, &QiSet::new(0, vec!["nope".into()])),
            Err(Error::UnknownColumn(_))
        ));
        assert!(equivalence_classes(&ds, &QiSet::new(0, vec!["y".into()])).is_err());
        assert!(equivalence_classes(&ds, &QiSet::new(0, vec![])).is_err());
        assert!(equivalence_classes(&ds, &QiSet::new(0, vec!["q".into(), "q".into()])).is_err());
    }

    #[test]
    fn combinations_enumerate_all() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(10, 4), 210);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn qi_size_rounding() {
        assert_eq!(qi_set_size(10, 0.4), 4);
        assert_eq!(qi_set_size(5, 0.4), 2);
        // 0.4 * 1 rounds to 0, floored at 1
        assert_eq!(qi_set_size(1, 0.4), 1);
        assert_eq!(qi_set_size(6, 0.25), 2); // 1.5 rounds up
    }
}
