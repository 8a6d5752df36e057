//! Gradient-boosted regression trees on log-loss.
//!
//! Two flavours share one histogram tree builder: the classic variant fits
//! each tree to first-order residuals with mean-residual leaves, the Newton
//! variant uses gradient and hessian sums with an L2 term on leaf weights.

use super::auc::auc_opt;
use super::encode::Matrix;
use super::EarlyStopping;

/// Upper bound on split thresholds per feature.
pub const MAX_THRESHOLDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Classic,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub flavor: Flavor,
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl BoostParams {
    fn lambda(&self) -> f64 {
        match self.flavor {
            Flavor::Classic => 0.0,
            Flavor::Newton => 1.0,
        }
    }

    fn min_child_weight(&self) -> f64 {
        match self.flavor {
            Flavor::Classic => 0.0,
            Flavor::Newton => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl Ensemble {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }
}

/// Quantized features: per-feature thresholds and row-major bin indices, so
/// one row's bins share a cache line when histograms gather by row.
struct Binned {
    n_features: usize,
    thresholds: Vec<Vec<f64>>,
    /// Start of each feature's bins in the flat histogram.
    offsets: Vec<usize>,
    total_bins: usize,
    bins: Vec<u8>,
}

fn thresholds_for(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() <= 1 {
        return Vec::new();
    }
    if values.len() <= MAX_THRESHOLDS + 1 {
        return values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let m = values.len();
    let mut out: Vec<f64> = (1..=MAX_THRESHOLDS)
        .map(|q| values[q * m / (MAX_THRESHOLDS + 1)])
        .collect();
    out.dedup();
    let max = values[m - 1];
    out.retain(|&t| t < max);
    out
}

impl Binned {
    fn new(x: &Matrix) -> Self {
        let n = x.rows;
        let mut thresholds = Vec::with_capacity(x.cols);
        let mut offsets = Vec::with_capacity(x.cols);
        let f = x.cols;
        let mut bins = vec![0u8; n * f];
        let mut total = 0;
        for j in 0..f {
            let col: Vec<f64> = (0..n).map(|i| x.get(i, j)).collect();
            let th = thresholds_for(col.clone());
            for (i, v) in col.iter().enumerate() {
                bins[i * f + j] = th.partition_point(|&t| t < *v) as u8;
            }
            offsets.push(total);
            total += th.len() + 1;
            thresholds.push(th);
        }
        Binned {
            n_features: f,
            thresholds,
            offsets,
            total_bins: total,
            bins,
        }
    }

    #[inline]
    fn bin(&self, feature: usize, row: usize) -> usize {
        self.bins[row * self.n_features + feature] as usize
    }

    fn n_rows(&self) -> usize {
        self.bins.len() / self.n_features.max(1)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    g: f64,
    h: f64,
    n: u32,
}

struct Builder<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    params: BoostParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl<'a> Builder<'a> {
    fn histogram(&self, rows: &[u32]) -> Vec<Cell> {
        let mut hist = vec![Cell::default(); self.data.total_bins];
        let f = self.data.n_features;
        for &r in rows {
            let r = r as usize;
            let (g, h) = (self.grad[r], self.hess[r]);
            let bins = &self.data.bins[r * f..(r + 1) * f];
            for (&b, &off) in bins.iter().zip(&self.data.offsets) {
                let c = &mut hist[off + b as usize];
                c.g += g;
                c.h += h;
                c.n += 1;
            }
        }
        hist
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.lambda();
        if denom <= 0.0 {
            0.0
        } else {
            g * g / denom
        }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.lambda();
        if denom <= 0.0 {
            0.0
        } else {
            -g / denom * self.params.learning_rate
        }
    }

    fn best_split(&self, hist: &[Cell], total: Cell) -> Option<BestSplit> {
        let parent = self.score(total.g, total.h);
        let mcw = self.params.min_child_weight();
        let mut best: Option<BestSplit> = None;
        for (j, th) in self.data.thresholds.iter().enumerate() {
            if th.is_empty() {
                continue;
            }
            let off = self.data.offsets[j];
            let mut left = Cell::default();
            for b in 0..th.len() {
                let c = hist[off + b];
                // an empty bin repeats the previous candidate, which a strict
                // improvement test never picks twice
                if c.n == 0 {
                    continue;
                }
                left.g += c.g;
                left.h += c.h;
                left.n += c.n;
                let (rg, rh, rn) = (total.g - left.g, total.h - left.h, total.n - left.n);
                if rn == 0 {
                    break;
                }
                if left.h < mcw || rh < mcw {
                    continue;
                }
                let gain = self.score(left.g, left.h) + self.score(rg, rh) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: j,
                        bin: b,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// Whether a node at `depth` with these sums could still be split; a
    /// node that cannot needs no histogram.
    fn splittable(&self, total: Cell, depth: usize) -> bool {
        let mcw = self.params.min_child_weight();
        depth < self.params.max_depth && total.n >= 2 && total.h >= 2.0 * mcw * (1.0 - 1e-9)
    }

    fn build(&mut self, rows: &mut [u32], hist: Option<Vec<Cell>>, total: Cell, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(total.g, total.h)));
        let Some(hist) = hist else {
            return id;
        };
        let Some(split) = self.best_split(&hist, total) else {
            return id;
        };
        // partition rows in place: bin <= split.bin goes left
        let mut lo = 0;
        let mut hi = rows.len();
        while lo < hi {
            if self.data.bin(split.feature, rows[lo] as usize) <= split.bin {
                lo += 1;
            } else {
                hi -= 1;
                rows.swap(lo, hi);
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(lo);
        let sum = |rs: &[u32]| {
            rs.iter().fold(Cell::default(), |mut c, &r| {
                c.g += self.grad[r as usize];
                c.h += self.hess[r as usize];
                c.n += 1;
                c
            })
        };
        let (lt, rt) = (sum(left_rows), sum(right_rows));
        let (need_l, need_r) = (self.splittable(lt, depth + 1), self.splittable(rt, depth + 1));
        // build the smaller child's histogram, derive the other by subtraction
        let (lh, rh) = if !need_l && !need_r {
            (None, None)
        } else if left_rows.len() <= right_rows.len() {
            let l = self.histogram(left_rows);
            let r = need_r.then(|| subtract(&hist, &l));
            (need_l.then_some(l), r)
        } else {
            let r = self.histogram(right_rows);
            let l = need_l.then(|| subtract(&hist, &r));
            (l, need_r.then_some(r))
        };
        drop(hist);
        let left = self.build(left_rows, lh, lt, depth + 1);
        let right = self.build(right_rows, rh, rt, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: self.data.thresholds[split.feature][split.bin],
            left,
            right,
        };
        id
    }
}

fn subtract(parent: &[Cell], child: &[Cell]) -> Vec<Cell> {
    parent
        .iter()
        .zip(child)
        .map(|(p, c)| Cell {
            g: p.g - c.g,
            h: p.h - c.h,
            n: p.n - c.n,
        })
        .collect()
}

fn build_tree(data: &Binned, grad: &[f64], hess: &[f64], params: BoostParams) -> Tree {
    let mut rows: Vec<u32> = (0..data.n_rows() as u32).collect();
    let mut b = Builder {
        data,
        grad,
        hess,
        params,
        nodes: Vec::new(),
    };
    let total = rows.iter().fold(Cell::default(), |mut c, &r| {
        c.g += grad[r as usize];
        c.h += hess[r as usize];
        c.n += 1;
        c
    });
    let hist = b.splittable(total, 0).then(|| b.histogram(&rows));
    b.build(&mut rows, hist, total, 0);
    Tree { nodes: b.nodes }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    // one exp and a select, so mixed signs do not cost branch misses
    let e = (-z.abs()).exp();
    let r = 1.0 / (1.0 + e);
    if z >= 0.0 {
        r
    } else {
        e * r
    }
}

/// Fits an ensemble. With a validation set holding both classes, training
/// stops once validation AUC has not improved for the patience window; the
/// trees grown so far are kept.
pub fn fit_boost(x: &Matrix, y: &[u8], valid: Option<(&Matrix, &[u8])>, params: BoostParams) -> Ensemble {
    let n = x.rows;
    let pos = y.iter().filter(|&&l| l == 1).count() as f64;
    let prior = ((pos + 0.5) / (n as f64 + 1.0)).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prior / (1.0 - prior)).ln();
    let data = Binned::new(x);
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![1.0; n];
    let mut trees = Vec::new();
    let mut val_raw: Option<Vec<f64>> = valid.map(|(vx, _)| vec![base_score; vx.rows]);
    let mut stopper = EarlyStopping::default();
    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - f64::from(y[i]);
            if params.flavor == Flavor::Newton {
                hess[i] = (p * (1.0 - p)).max(1e-16);
            }
        }
        let tree = build_tree(&data, &grad, &hess, params);
        for (i, r) in raw.iter_mut().enumerate() {
            *r += tree.predict_row(x.row(i));
        }
        let mut stop = false;
        if let (Some((vx, vy)), Some(vr)) = (valid, val_raw.as_mut()) {
            for (i, r) in vr.iter_mut().enumerate() {
                *r += tree.predict_row(vx.row(i));
            }
            if let Some(a) = auc_opt(vr, vy) {
                stop = stopper.update(a);
            }
        }
        trees.push(tree);
        if stop {
            break;
        }
    }
    Ensemble { base_score, trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_midpoints_or_quantiles() {
        assert_eq!(thresholds_for(vec![1.0, 3.0, 1.0]), vec![2.0]);
        assert!(thresholds_for(vec![5.0; 4]).is_empty());
        let many: Vec<f64> = (0..1000).map(f64::from).collect();
        let th = thresholds_for(many);
        assert!(th.len() <= MAX_THRESHOLDS && th.len() > 50);
        assert!(th.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_split_separates() {
        // Newton leaves need hessian mass >= 1, i.e. >= 4 rows at p = 0.5
        let x = Matrix::new(
            12,
            1,
            (0..12)
                .map(|i| if i < 6 { i as f64 } else { 10.0 + i as f64 })
                .collect(),
        );
        let y = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        for flavor in [Flavor::Classic, Flavor::Newton] {
            let e = fit_boost(
                &x,
                &y,
                None,
                BoostParams {
                    flavor,
                    n_estimators: 5,
                    max_depth: 2,
                    learning_rate: 0.5,
                },
            );
            assert_eq!(e.trees.len(), 5);
            assert!(e.predict_row(&[0.5]) < e.predict_row(&[11.0]));
        }
    }
}
