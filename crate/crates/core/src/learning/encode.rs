//! Dense numeric encoding of predictors: numerics pass through, categoricals
//! are one-hot over the schema's levels.

use crate::error::{Error, Result};
use crate::tabular::{ColumnData, ColumnKind, Dataset};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape");
        Matrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Num { col: usize },
    Cat { col: usize, levels: usize },
}

/// Column layout derived from a training schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    names: Vec<(String, ColumnKind)>,
    slots: Vec<Slot>,
    width: usize,
    n_predictors: usize,
}

impl Layout {
    pub fn from_schema(ds: &Dataset) -> Self {
        let mut slots = Vec::new();
        let mut width = 0;
        let predictors = ds.predictor_indices();
        for &c in &predictors {
            match &ds.column(c).data {
                ColumnData::Numeric(_) => {
                    slots.push(Slot::Num { col: c });
                    width += 1;
                }
                ColumnData::Categorical { levels, .. } => {
                    slots.push(Slot::Cat {
                        col: c,
                        levels: levels.len(),
                    });
                    width += levels.len();
                }
            }
        }
        Layout {
            names: ds.columns().iter().map(|c| (c.name.clone(), c.kind())).collect(),
            slots,
            width,
            n_predictors: predictors.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_predictors(&self) -> usize {
        self.n_predictors
    }

    pub fn check(&self, ds: &Dataset) -> Result<()> {
        let same = self.names.len() == ds.n_cols()
            && self
                .names
                .iter()
                .zip(ds.columns())
                .all(|((n, k), c)| *n == c.name && *k == c.kind());
        if same {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(format!(
                "dataset `{}` does not match the training schema",
                ds.name()
            )))
        }
    }

    /// Encodes `ds`; unseen category codes encode as all zeros.
    pub fn encode(&self, ds: &Dataset) -> Result<Matrix> {
        self.check(ds)?;
        let n = ds.n_rows();
        let mut m = Matrix::zeros(n, self.width);
        let mut off = 0;
        for slot in &self.slots {
            match *slot {
                Slot::Num { col } => {
                    let v = ds.column(col).as_numeric().expect("numeric");
                    for (r, &x) in v.iter().enumerate() {
                        m.data[r * self.width + off] = x;
                    }
                    off += 1;
                }
                Slot::Cat { col, levels } => {
                    let (_, codes) = ds.column(col).as_codes().expect("categorical");
                    for (r, &k) in codes.iter().enumerate() {
                        if (k as usize) < levels {
                            m.data[r * self.width + off + k as usize] = 1.0;
                        }
                    }
                    off += levels;
                }
            }
        }
        Ok(m)
    }
}

/// Per-column standardization fitted on training rows; constant columns
/// get unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    mean: Vec<f64>,
    inv_sd: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows.max(1) as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_sd = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, inv_sd }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows {
            let row = &mut out.data[i * x.cols..(i + 1) * x.cols];
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_sd) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::Column;

    #[test]
    fn one_hot_layout() {
        let ds = Dataset::new(
            "e",
            vec![
                Column::numeric("x", vec![1.0, 2.0, 3.0]),
                Column::categorical("c", &["b", "a", "b"]),
                Column::categorical("y", &["n", "y", "n"]),
            ],
            "y",
        )
        .unwrap();
        let layout = Layout::from_schema(&ds);
        assert_eq!(layout.width(), 3);
        let m = layout.encode(&ds).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 1.0]);
        assert_eq!(m.row(1), &[2.0, 1.0, 0.0]);
        let s = Scaler::fit(&m).apply(&m);
        let col0: Vec<f64> = (0..3).map(|i| s.get(i, 0)).collect();
        assert!((col0.iter().sum::<f64>()).abs() < 1e-12);
    }
}
