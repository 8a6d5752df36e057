//! Linkability risk of a protected variant.
//!
//! The attacker knows two disjoint groups of quasi-identifiers for a target.
//! For each group it looks up the `k` nearest variant rows; if the two
//! neighbour sets share a row, the target's two halves are linked. The same
//! attack run with held-out control records as targets measures the rate at
//! which links appear by chance, and the reported risk is corrected by it.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gower::{GowerScale, GowerView};
use crate::riskprofile::QiSet;
use crate::seed;
use crate::tabular::Dataset;

/// Default neighbourhood size of the attack.
pub const DEFAULT_K: usize = 10;
/// Default cap on the number of attacked records.
pub const DEFAULT_MAX_TARGETS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkabilityReport {
    pub n_targets: usize,
    pub n_control: usize,
    pub k: usize,
    pub naive_rate: f64,
    pub control_rate: f64,
    pub adjusted_risk: f64,
    pub aux_split: (Vec<String>, Vec<String>),
    /// Original-row indices of the attacked records, in sampling order.
    #[serde(skip)]
    pub targets: Vec<usize>,
    /// Whether each attacked record was linked.
    #[serde(skip)]
    pub linked: Vec<bool>,
}

impl LinkabilityReport {
    /// Original-row indices of the successfully linked targets.
    pub fn successes(&self) -> Vec<usize> {
        self.targets
            .iter()
            .zip(&self.linked)
            .filter(|(_, &l)| l)
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Alternating split of the QI columns: even positions to A, odd to B.
pub fn split_aux_columns(qis: &QiSet) -> Result<(Vec<String>, Vec<String>)> {
    if qis.columns.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "linkability needs at least 2 QI columns, QI set {} has {}",
            qis.id,
            qis.columns.len()
        )));
    }
    let a = qis.columns.iter().step_by(2).cloned().collect();
    let b = qis.columns.iter().skip(1).step_by(2).cloned().collect();
    Ok((a, b))
}

/// `clamp((naive - control) / (1 - control), 0, 1)`, zero when control is 1.
pub fn adjusted_risk(naive_rate: f64, control_rate: f64) -> f64 {
    if control_rate >= 1.0 {
        return 0.0;
    }
    ((naive_rate - control_rate) / (1.0 - control_rate)).clamp(0.0, 1.0)
}

fn resolve(ds: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| ds.column_index(n)).collect()
}

struct Subspaces {
    a: GowerScale,
    b: GowerScale,
    variant_a: GowerView<f64>,
    variant_b: GowerView<f64>,
}

impl Subspaces {
    fn links(&self, probes: &Dataset, rows: &[usize], k: usize) -> Vec<bool> {
        let probes = probes.subset(rows);
        let pa = self.a.view::<f64>(&probes);
        let pb = self.b.view::<f64>(&probes);
        (0..rows.len())
            .into_par_iter()
            .map(|i| {
                let ia = pa.nearest(i, &self.variant_a, k);
                let ib = pb.nearest(i, &self.variant_b, k);
                ia.iter().any(|x| ib.contains(x))
            })
            .collect()
    }
}

fn rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 0.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Runs the two-subspace nearest-neighbour linkage attack.
///
/// `n_targets` original rows are sampled without replacement; the control
/// side attacks `min(n_targets, |control|)` control rows. Distances are Gower
/// with column ranges taken from `original`.
pub fn linkability(
    original: &Dataset,
    variant: &Dataset,
    qis: &QiSet,
    control: &Dataset,
    n_targets: usize,
    k: usize,
    seed: u64,
) -> Result<LinkabilityReport> {
    if variant.n_rows() == 0 {
        return Err(Error::InvalidArgument("empty variant".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if n_targets == 0 || n_targets > original.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "n_targets {n_targets} must be in 1..={}",
            original.n_rows()
        )));
    }
    qis.resolve(original)?;
    original.check_same_schema(variant)?;
    original.check_same_schema(control)?;
    let (names_a, names_b) = split_aux_columns(qis)?;
    let cols_a = resolve(original, &names_a)?;
    let cols_b = resolve(original, &names_b)?;
    let a = GowerScale::new(original, &cols_a);
    let b = GowerScale::new(original, &cols_b);
    let space = Subspaces {
        variant_a: a.view(variant),
        variant_b: b.view(variant),
        a,
        b,
    };

    let mut rng = seed::rng(seed);
    let targets = index::sample(&mut rng, original.n_rows(), n_targets).into_vec();
    let n_control = n_targets.min(control.n_rows());
    let control_rows = index::sample(&mut rng, control.n_rows(), n_control).into_vec();

    let linked = space.links(original, &targets, k);
    let control_linked = space.links(control, &control_rows, k);
    let naive_rate = rate(&linked);
    let control_rate = rate(&control_linked);
    Ok(LinkabilityReport {
        n_targets,
        n_control,
        k,
        naive_rate,
        control_rate,
        adjusted_risk: adjusted_risk(naive_rate, control_rate),
        aux_split: (names_a, names_b),
        targets,
        linked,
    })
}

pub fn default_n_targets(original_rows: usize) -> usize {
    DEFAULT_MAX_TARGETS.min(original_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    fn qis(cols: &[&str]) -> QiSet {
        QiSet::new(0, cols.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn alternating_split() {
        let (a, b) = split_aux_columns(&qis(&["c0", "c1", "c2", "c3"])).unwrap();
        assert_eq!(a, vec!["c0", "c2"]);
        assert_eq!(b, vec!["c1", "c3"]);
        let (a, b) = split_aux_columns(&qis(&["c0", "c1"])).unwrap();
        assert_eq!((a, b), (vec!["c0".to_string()], vec!["c1".to_string()]));
        assert!(split_aux_columns(&qis(&["c0"])).is_err());
    }

    #[test]
    fn adjustment_identities() {
        assert_eq!(adjusted_risk(0.3, 0.3), 0.0);
        assert_eq!(adjusted_risk(0.2, 0.5), 0.0);
        assert_eq!(adjusted_risk(1.0, 1.0), 0.0);
        assert!((adjusted_risk(0.6, 0.2) - 0.5).abs() < 1e-15);
    }

    fn grid_table(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let z: Vec<f64> = (0..n).map(|i| (i * 7 % n) as f64).collect();
        let y: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        Dataset::new(
            "g",
            vec![
                Column::numeric("x", x),
                Column::numeric("z", z),
                Column::categorical("y", &y),
            ],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn self_copy_links_everything() {
        let ds = grid_table(40);
        let r = linkability(&ds, &ds, &qis(&["x", "z"]), &ds, 40, 1, 3).unwrap();
        assert_eq!(r.naive_rate, 1.0);
        // control drawn from the same rows links equally → no excess risk
        assert_eq!(r.control_rate, 1.0);
        assert_eq!(r.adjusted_risk, 0.0);
    }

    #[test]
    fn argument_errors() {
        let ds = grid_table(10);
        let q = qis(&["x", "z"]);
        assert!(linkability(&ds, &ds, &q, &ds, 11, 1, 0).is_err());
        assert!(linkability(&ds, &ds, &q, &ds, 5, 0, 0).is_err());
        assert!(linkability(&ds, &ds.subset(&[]), &q, &ds, 5, 1, 0).is_err());
        assert!(linkability(&ds, &ds, &qis(&["x", "nope"]), &ds, 5, 1, 0).is_err());
    }
}
