//! Gower distance over mixed numeric/categorical columns.
//!
//! Numeric attributes contribute `|a - b| / range`, categoricals a 0/1
//! mismatch; the sum is averaged over the participating columns. Ranges are
//! fixed by a reference table so distances between two different tables
//! (targets vs. variant rows) are on one scale.

use std::cmp::Ordering;

use crate::scalar::{total_cmp, Scalar};
use crate::tabular::{ColumnData, Dataset};

/// Column subset plus per-column scale, taken from a reference table.
#[derive(Debug, Clone)]
pub struct GowerScale {
    numeric: Vec<(usize, f64)>,
    categorical: Vec<usize>,
}

impl GowerScale {
    pub fn new(reference: &Dataset, cols: &[usize]) -> Self {
        let mut numeric = Vec::new();
        let mut categorical = Vec::new();
        for &c in cols {
            match reference.column(c).data {
                ColumnData::Numeric(_) => {
                    let (lo, hi) = reference.numeric_range(c).unwrap_or((0.0, 0.0));
                    let inv = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
                    numeric.push((c, inv));
                }
                ColumnData::Categorical { .. } => categorical.push(c),
            }
        }
        GowerScale { numeric, categorical }
    }

    pub fn n_cols(&self) -> usize {
        self.numeric.len() + self.categorical.len()
    }

    /// Projects `ds` onto this scale. `ds` must share the reference schema.
    pub fn view<T: Scalar>(&self, ds: &Dataset) -> GowerView<T> {
        let n = ds.n_rows();
        let mut num = Vec::with_capacity(n * self.numeric.len());
        let mut cat = Vec::with_capacity(n * self.categorical.len());
        let num_cols: Vec<(&[f64], f64)> = self
            .numeric
            .iter()
            .map(|&(c, inv)| (ds.column(c).as_numeric().expect("numeric column"), inv))
            .collect();
        let cat_cols: Vec<&[u32]> = self
            .categorical
            .iter()
            .map(|&c| ds.column(c).as_codes().expect("categorical column").1)
            .collect();
        for r in 0..n {
            for (vals, _) in &num_cols {
                num.push(T::lit(vals[r]));
            }
            for codes in &cat_cols {
                cat.push(codes[r]);
            }
        }
        GowerView {
            num,
            inv: num_cols.iter().map(|&(_, inv)| T::lit(inv)).collect(),
            cat,
            n_num: self.numeric.len(),
            n_cat: self.categorical.len(),
            n_rows: n,
        }
    }
}

/// Row-major projection of a table. Numeric values stay raw and the
/// difference is scaled, so equal raw gaps give bit-equal distances and
/// index tie-breaks stay exact.
#[derive(Debug, Clone)]
pub struct GowerView<T> {
    num: Vec<T>,
    inv: Vec<T>,
    cat: Vec<u32>,
    n_num: usize,
    n_cat: usize,
    n_rows: usize,
}

impl<T: Scalar> GowerView<T> {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn distance(&self, i: usize, other: &GowerView<T>, j: usize) -> T {
        let width = self.n_num + self.n_cat;
        if width == 0 {
            return T::zero();
        }
        gower_distance(
            &self.inv,
            &self.num[i * self.n_num..(i + 1) * self.n_num],
            &self.cat[i * self.n_cat..(i + 1) * self.n_cat],
            &other.num[j * other.n_num..(j + 1) * other.n_num],
            &other.cat[j * other.n_cat..(j + 1) * other.n_cat],
        )
    }

    /// Indices of the `k` rows of `base` closest to row `i` of `self`,
    /// nearest first, ties broken by ascending index.
    pub fn nearest(&self, i: usize, base: &GowerView<T>, k: usize) -> Vec<usize> {
        let dist: Vec<(T, usize)> = (0..base.n_rows).map(|j| (self.distance(i, base, j), j)).collect();
        k_smallest(dist, k)
    }
}

/// Gower distance on raw values; `inv` holds each numeric column's
/// reciprocal range (0 for constant columns).
#[inline]
pub fn gower_distance<T: Scalar>(inv: &[T], a_num: &[T], a_cat: &[u32], b_num: &[T], b_cat: &[u32]) -> T {
    let width = a_num.len() + a_cat.len();
    if width == 0 {
        return T::zero();
    }
    let mut s = T::zero();
    for ((x, y), w) in a_num.iter().zip(b_num).zip(inv) {
        s = s + (*x - *y).abs() * *w;
    }
    let mismatches = a_cat.iter().zip(b_cat).filter(|(x, y)| x != y).count();
    (s + T::from_usize_lossy(mismatches)) / T::from_usize_lossy(width)
}

fn by_dist_then_index<T: Scalar>(a: &(T, usize), b: &(T, usize)) -> Ordering {
    total_cmp(&a.0, &b.0).then(a.1.cmp(&b.1))
}

/// The `k` smallest `(distance, index)` pairs' indices in ascending order.
pub fn k_smallest<T: Scalar>(mut dist: Vec<(T, usize)>, k: usize) -> Vec<usize> {
    let k = k.min(dist.len());
    if k == 0 {
        return Vec::new();
    }
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_dist_then_index);
        dist.truncate(k);
    }
    dist.sort_by(by_dist_then_index);
    dist.into_iter().map(|(_, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    fn table() -> Dataset {
        Dataset::new(
            "g",
            vec![
                Column::numeric("x", vec![0.0, 10.0, 5.0, 5.0]),
                Column::categorical("c", &["a", "a", "b", "a"]),
                Column::categorical("y", &["p", "q", "p", "q"]),
            ],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn mixed_distance_is_averaged() {
        let ds = table();
        let scale = GowerScale::new(&ds, &[0, 1]);
        let v = scale.view::<f64>(&ds);
        // |0-10|/10 = 1, categorical match → (1 + 0) / 2
        assert!((v.distance(0, &v, 1) - 0.5).abs() < 1e-15);
        // |0-5|/10 = .5, mismatch → (0.5 + 1) / 2
        assert!((v.distance(0, &v, 2) - 0.75).abs() < 1e-15);
        let v32 = scale.view::<f32>(&ds);
        assert!((v32.distance(0, &v32, 2) - 0.75).abs() < 1e-6);
    }

    #[test]
    fn ties_break_by_index() {
        let ds = table();
        let scale = GowerScale::new(&ds, &[0]);
        let v = scale.view::<f64>(&ds);
        // rows 2 and 3 both sit at 5.0
        assert_eq!(v.nearest(2, &v, 2), vec![2, 3]);
        assert_eq!(v.nearest(3, &v, 1), vec![2]);
        assert_eq!(v.nearest(0, &v, 10), vec![0, 2, 3, 1]);
    }

    #[test]
    fn constant_column_contributes_nothing() {
        let ds = Dataset::new(
            "c",
            vec![
                Column::numeric("x", vec![3.0, 3.0]),
                Column::categorical("y", &["p", "q"]),
            ],
            "y",
        )
        .unwrap();
        let v = GowerScale::new(&ds, &[0]).view::<f64>(&ds);
        assert_eq!(v.distance(0, &v, 1), 0.0);
    }
}
