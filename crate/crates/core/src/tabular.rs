//! Typed tabular datasets with a binary class target.
//!
//! Storage is column-major. Categorical columns keep an explicit level list
//! and `u32` codes; derived tables (subsets, protected variants) share the
//! level list of their source so codes stay comparable across the lineage.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Category assigned to missing categorical cells at load time.
pub const MISSING_CATEGORY: &str = "__NA__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<u32> },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    fn take(&self, idx: &[usize]) -> ColumnData {
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: idx.iter().map(|&i| codes[i]).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    /// Builds a categorical column from tokens; levels are sorted.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, tokens: &[S]) -> Self {
        let mut levels: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let lookup: HashMap<&str, u32> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
        let codes = tokens.iter().map(|t| lookup[t.as_ref()]).collect();
        Column {
            name: name.into(),
            data: ColumnData::Categorical { levels, codes },
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.data.kind()
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_codes(&self) -> Option<(&[String], &[u32])> {
        match &self.data {
            ColumnData::Categorical { levels, codes } => Some((levels, codes)),
            _ => None,
        }
    }

    pub fn token(&self, row: usize) -> String {
        match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Categorical { levels, codes } => levels[codes[row] as usize].clone(),
        }
    }
}

/// One cell of a row view. Categorical cells carry the column's level code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(u32),
}

impl Value {
    /// Bit pattern used for exact equality and hashing (`-0.0` folds to `0.0`).
    pub fn key(self) -> u64 {
        match self {
            Value::Num(x) => {
                if x == 0.0 {
                    0
                } else {
                    x.to_bits()
                }
            }
            Value::Cat(c) => c as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    columns: Vec<Column>,
    target: usize,
    n_rows: usize,
    positive: u32,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: Vec<Column>, target: &str) -> Result<Self> {
        let name = name.into();
        if columns.is_empty() {
            return Err(Error::InvalidDataset("no columns".into()));
        }
        let n_rows = columns[0].data.len();
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::InvalidDataset("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate column `{}`", c.name)));
            }
            if c.data.len() != n_rows {
                return Err(Error::InvalidDataset(format!(
                    "column `{}` has {} values, expected {n_rows}",
                    c.name,
                    c.data.len()
                )));
            }
            match &c.data {
                ColumnData::Numeric(v) => {
                    if let Some(pos) = v.iter().position(|x| !x.is_finite()) {
                        return Err(Error::InvalidDataset(format!(
                            "non-finite value in `{}` at row {pos}",
                            c.name
                        )));
                    }
                }
                ColumnData::Categorical { levels, codes } => {
                    if codes.iter().any(|&k| k as usize >= levels.len()) {
                        return Err(Error::InvalidDataset(format!(
                            "category code out of range in `{}`",
                            c.name
                        )));
                    }
                }
            }
        }
        let target_idx = columns
            .iter()
            .position(|c| c.name == target)
            .ok_or_else(|| Error::UnknownColumn(target.to_string()))?;
        let positive = match &columns[target_idx].data {
            ColumnData::Categorical { levels, codes } => {
                let mut present: Vec<u32> = codes.clone();
                present.sort_unstable();
                present.dedup();
                if present.len() != 2 {
                    return Err(Error::NonBinaryTarget {
                        column: target.to_string(),
                        distinct: present.len(),
                    });
                }
                let (a, b) = (present[0], present[1]);
                if levels[a as usize] > levels[b as usize] {
                    a
                } else {
                    b
                }
            }
            ColumnData::Numeric(_) => {
                return Err(Error::InvalidDataset(format!("target `{target}` must be categorical")))
            }
        };
        Ok(Dataset {
            name,
            columns,
            target: target_idx,
            n_rows,
            positive,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target_name(&self) -> &str {
        &self.columns[self.target].name
    }

    /// Column indices of all non-target columns, in table order.
    pub fn predictor_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&i| i != self.target).collect()
    }

    pub fn predictor_names(&self) -> Vec<String> {
        self.predictor_indices()
            .into_iter()
            .map(|i| self.columns[i].name.clone())
            .collect()
    }

    /// Binary labels: 1 for the positive class (the lexicographically larger
    /// of the two target levels), 0 otherwise.
    pub fn labels(&self) -> Vec<u8> {
        let (_, codes) = self.columns[self.target].as_codes().expect("categorical target");
        codes.iter().map(|&c| u8::from(c == self.positive)).collect()
    }

    pub fn positive_code(&self) -> u32 {
        self.positive
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for l in self.labels() {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn value(&self, row: usize, col: usize) -> Value {
        match &self.columns[col].data {
            ColumnData::Numeric(v) => Value::Num(v[row]),
            ColumnData::Categorical { codes, .. } => Value::Cat(codes[row]),
        }
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        (0..self.columns.len()).map(|c| self.value(row, c)).collect()
    }

    pub fn row_key(&self, row: usize) -> Vec<u64> {
        (0..self.columns.len()).map(|c| self.value(row, c).key()).collect()
    }

    /// Rows `idx` in the given order, sharing this table's schema.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    data: c.data.take(idx),
                })
                .collect(),
            target: self.target,
            n_rows: idx.len(),
            positive: self.positive,
        }
    }

    /// Builds a table with this table's schema from row views.
    pub fn from_rows(&self, name: impl Into<String>, rows: &[Vec<Value>]) -> Result<Dataset> {
        let mut columns = Vec::with_capacity(self.columns.len());
        for (ci, col) in self.columns.iter().enumerate() {
            let data = match &col.data {
                ColumnData::Numeric(_) => {
                    let mut out = Vec::with_capacity(rows.len());
                    for (ri, r) in rows.iter().enumerate() {
                        match r.get(ci) {
                            Some(Value::Num(x)) => out.push(*x),
                            _ => {
                                return Err(Error::SchemaMismatch(format!(
                                    "row {ri}: column `{}` expects a numeric value",
                                    col.name
                                )))
                            }
                        }
                    }
                    ColumnData::Numeric(out)
                }
                ColumnData::Categorical { levels, .. } => {
                    let mut out = Vec::with_capacity(rows.len());
                    for (ri, r) in rows.iter().enumerate() {
                        match r.get(ci) {
                            Some(Value::Cat(k)) if (*k as usize) < levels.len() => out.push(*k),
                            _ => {
                                return Err(Error::SchemaMismatch(format!(
                                    "row {ri}: column `{}` expects a category code",
                                    col.name
                                )))
                            }
                        }
                    }
                    ColumnData::Categorical {
                        levels: levels.clone(),
                        codes: out,
                    }
                }
            };
            columns.push(Column {
                name: col.name.clone(),
                data,
            });
        }
        if rows.iter().any(|r| r.len() != self.columns.len()) {
            return Err(Error::SchemaMismatch("row arity differs from schema".into()));
        }
        Dataset::new(name, columns, self.target_name())
    }

    /// Verifies identical column names, order and kinds.
    pub fn check_same_schema(&self, other: &Dataset) -> Result<()> {
        for (i, c) in self.columns.iter().enumerate() {
            match other.columns.get(i) {
                Some(o) if o.name == c.name && o.kind() == c.kind() => {}
                Some(o) => {
                    return Err(Error::SchemaMismatch(format!(
                        "column {i}: expected `{}` ({:?}), found `{}` ({:?})",
                        c.name,
                        c.kind(),
                        o.name,
                        o.kind()
                    )))
                }
                None => return Err(Error::SchemaMismatch(format!("column {i}: `{}` missing", c.name))),
            }
        }
        if other.columns.len() > self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "unexpected extra column `{}`",
                other.columns[self.columns.len()].name
            )));
        }
        if other.target_name() != self.target_name() {
            return Err(Error::SchemaMismatch("target column differs".into()));
        }
        Ok(())
    }

    /// Observed `(min, max)` of a numeric column.
    pub fn numeric_range(&self, col: usize) -> Option<(f64, f64)> {
        let v = self.columns[col].as_numeric()?;
        if v.is_empty() {
            return None;
        }
        Some(v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        }))
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn parse_finite(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|x| x.is_finite())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(file, &name, target)
}

/// Parses CSV text with a mandatory header row.
///
/// A column is numeric iff every non-missing cell parses as a finite real.
/// Missing numeric cells take the column median; missing categorical cells
/// become [`MISSING_CATEGORY`]. The target column is always categorical.
pub fn read_csv<R: Read>(reader: R, name: &str, target: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if !header.iter().any(|h| h == target) {
        return Err(Error::UnknownColumn(target.to_string()));
    }
    let width = header.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); width];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            cells[c].push(field.to_string());
        }
    }
    let mut columns = Vec::with_capacity(width);
    for (name, col) in header.iter().zip(cells) {
        let numeric = name != target && col.iter().all(|c| is_missing(c) || parse_finite(c).is_some());
        if numeric {
            let parsed: Vec<Option<f64>> = col
                .iter()
                .map(|c| if is_missing(c) { None } else { parse_finite(c) })
                .collect();
            let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
            let fill = median(&mut present);
            columns.push(Column::numeric(
                name.clone(),
                parsed.into_iter().map(|v| v.unwrap_or(fill)).collect(),
            ));
        } else {
            let tokens: Vec<String> = col
                .into_iter()
                .map(|c| {
                    if is_missing(&c) {
                        MISSING_CATEGORY.to_string()
                    } else {
                        c
                    }
                })
                .collect();
            columns.push(Column::categorical(name.clone(), &tokens));
        }
    }
    Dataset::new(name, columns, target)
}

/// Reads CSV text into `schema`'s column layout.
///
/// The header must list the schema's columns in order; the first differing
/// column is named in the error. Categorical tokens map onto the schema's
/// levels, unseen tokens are appended as new levels.
pub fn read_csv_like<R: Read>(reader: R, name: &str, schema: &Dataset) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for (i, col) in schema.columns().iter().enumerate() {
        match header.get(i) {
            Some(h) if *h == col.name => {}
            Some(h) => {
                return Err(Error::SchemaMismatch(format!(
                    "column {i}: expected `{}`, found `{h}`",
                    col.name
                )))
            }
            None => return Err(Error::SchemaMismatch(format!("column {i}: `{}` missing", col.name))),
        }
    }
    if header.len() > schema.n_cols() {
        return Err(Error::SchemaMismatch(format!(
            "unexpected extra column `{}`",
            header[schema.n_cols()]
        )));
    }
    let width = header.len();
    let mut cells: Vec<Vec<String>> = vec![Vec::new(); width];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                found: rec.len(),
            });
        }
        for (c, field) in rec.iter().enumerate() {
            cells[c].push(field.to_string());
        }
    }
    let mut columns = Vec::with_capacity(width);
    for (col, raw) in schema.columns().iter().zip(cells) {
        let data = match &col.data {
            ColumnData::Numeric(_) => {
                let mut parsed = Vec::with_capacity(raw.len());
                for (r, cell) in raw.iter().enumerate() {
                    if is_missing(cell) {
                        parsed.push(None);
                    } else {
                        match parse_finite(cell) {
                            Some(x) => parsed.push(Some(x)),
                            None => {
                                return Err(Error::SchemaMismatch(format!(
                                    "column `{}` row {r}: `{cell}` is not numeric",
                                    col.name
                                )))
                            }
                        }
                    }
                }
                let mut present: Vec<f64> = parsed.iter().flatten().copied().collect();
                let fill = median(&mut present);
                ColumnData::Numeric(parsed.into_iter().map(|v| v.unwrap_or(fill)).collect())
            }
            ColumnData::Categorical { levels, .. } => {
                let mut levels = levels.clone();
                let mut lookup: HashMap<String, u32> =
                    levels.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
                let codes = raw
                    .into_iter()
                    .map(|cell| {
                        let tok = if is_missing(&cell) {
                            MISSING_CATEGORY.to_string()
                        } else {
                            cell
                        };
                        *lookup.entry(tok.clone()).or_insert_with(|| {
                            levels.push(tok);
                            (levels.len() - 1) as u32
                        })
                    })
                    .collect();
                ColumnData::Categorical { levels, codes }
            }
        };
        columns.push(Column {
            name: col.name.clone(),
            data,
        });
    }
    Dataset::new(name, columns, schema.target_name())
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(ds, file)
}

/// Floats use Rust's shortest round-trip formatting.
pub fn write_csv_to<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ds.columns.iter().map(|c| c.name.as_str()))?;
    for r in 0..ds.n_rows {
        w.write_record(ds.columns.iter().map(|c| c.token(r)))?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn csv_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_csv_to(ds, &mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
}

/// Splits `total` across classes so each share is within one of
/// `fraction * count` (largest-remainder apportionment).
pub(crate) fn apportion(counts: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * fraction).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    for &k in order.iter().cycle().take(counts.len() * 2) {
        if assigned >= total {
            break;
        }
        if alloc[k] < counts[k] {
            alloc[k] += 1;
            assigned += 1;
        }
    }
    alloc
}

/// Stratified holdout: `round(fraction * n)` rows go to the test side.
pub fn holdout_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<Holdout> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let labels = ds.labels();
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    if by_class.iter().any(|c| c.len() < 2) {
        return Err(Error::ClassTooSmall("holdout needs at least 2 rows per class".into()));
    }
    let n = ds.n_rows();
    let total = (fraction * n as f64).round() as usize;
    let counts = [by_class[0].len(), by_class[1].len()];
    let mut alloc = apportion(&counts, fraction, total);
    // both sides keep every class with >= 2 members
    for k in 0..2 {
        if alloc[k] == 0 {
            alloc[k] = 1;
            alloc[1 - k] -= usize::from(alloc[1 - k] > 1);
        } else if alloc[k] == counts[k] {
            alloc[k] -= 1;
            if alloc[1 - k] + 1 < counts[1 - k] {
                alloc[1 - k] += 1;
            }
        }
    }
    let mut rng = seed::rng(seed);
    let mut test = Vec::with_capacity(total);
    let mut train = Vec::with_capacity(n - total);
    for k in 0..2 {
        let mut idx = by_class[k].clone();
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..alloc[k]]);
        train.extend_from_slice(&idx[alloc[k]..]);
    }
    test.sort_unstable();
    train.sort_unstable();
    Ok(Holdout {
        train_idx: train,
        test_idx: test,
        fraction,
        seed,
    })
}
