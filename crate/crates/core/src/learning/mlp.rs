//! Single-hidden-layer perceptron with logistic activations, trained by
//! full-batch gradient descent on L2-penalized log-loss.

use rand::Rng;

use super::auc::auc_opt;
use super::boost::sigmoid;
use super::encode::Matrix;
use super::{EarlyStopping, LossPlateau};
use crate::seed;

/// Gradient-descent step size.
pub const LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpParams {
    pub hidden: usize,
    pub alpha: f64,
    pub max_iter: usize,
}

/// Network parameters. `w1` is `hidden × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpNet {
    /// Glorot-uniform initialization scaled for logistic units.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let b1_bound = (2.0 / (inputs + hidden) as f64).sqrt();
        let b2_bound = (2.0 / (hidden + 1) as f64).sqrt();
        let mut u = |b: f64| rng.random_range(-b..=b);
        MlpNet {
            inputs,
            hidden,
            w1: (0..inputs * hidden).map(|_| u(b1_bound)).collect(),
            b1: (0..hidden).map(|_| u(b1_bound)).collect(),
            w2: (0..hidden).map(|_| u(b2_bound)).collect(),
            b2: u(b2_bound),
        }
    }

    /// `w1` transposed to `inputs × hidden`, so the forward pass runs as
    /// vectorizable updates over hidden units.
    fn w1_t(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.w1.len()];
        for h in 0..self.hidden {
            for j in 0..self.inputs {
                t[j * self.hidden + h] = self.w1[h * self.inputs + j];
            }
        }
        t
    }

    fn hidden_act(&self, w1_t: &[f64], x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b1);
        for (col, &v) in w1_t.chunks_exact(self.hidden).zip(x) {
            for (o, w) in out.iter_mut().zip(col) {
                *o += w * v;
            }
        }
        for o in out.iter_mut() {
            *o = sigmoid(*o);
        }
    }

    fn output(&self, a: &[f64]) -> f64 {
        self.b2 + self.w2.iter().zip(a).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Output pre-activation (log-odds) for one row.
    pub fn decision(&self, x: &[f64]) -> f64 {
        let mut a = vec![0.0; self.hidden];
        self.hidden_act(&self.w1_t(), x, &mut a);
        self.output(&a)
    }

    /// [`MlpNet::decision`] for every row of `x`.
    pub fn decisions(&self, x: &Matrix) -> Vec<f64> {
        let w1_t = self.w1_t();
        let mut a = vec![0.0; self.hidden];
        (0..x.rows)
            .map(|i| {
                self.hidden_act(&w1_t, x.row(i), &mut a);
                self.output(&a)
            })
            .collect()
    }

    /// Mean log-loss plus `alpha / (2n) · ‖W‖²` (biases unpenalized).
    pub fn loss(&self, x: &Matrix, y: &[u8], alpha: f64) -> f64 {
        let n = x.rows as f64;
        let data: f64 = self
            .decisions(x)
            .into_iter()
            .zip(y)
            .map(|(z, &yi)| {
                let sp = if z > 0.0 {
                    z + (-z).exp().ln_1p()
                } else {
                    z.exp().ln_1p()
                };
                sp - f64::from(yi) * z
            })
            .sum();
        let l2: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
        data / n + 0.5 * alpha * l2 / n
    }

    /// Analytic gradient of [`MlpNet::loss`], returned in network shape.
    pub fn gradient(&self, x: &Matrix, y: &[u8], alpha: f64) -> MlpNet {
        let n = x.rows as f64;
        let mut g = MlpNet {
            inputs: self.inputs,
            hidden: self.hidden,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        };
        let w1_t = self.w1_t();
        let mut g1_t = vec![0.0; self.w1.len()];
        let mut a = vec![0.0; self.hidden];
        let mut d_h = vec![0.0; self.hidden];
        for i in 0..x.rows {
            let xi = x.row(i);
            self.hidden_act(&w1_t, xi, &mut a);
            let d_out = sigmoid(self.output(&a)) - f64::from(y[i]);
            g.b2 += d_out;
            for h in 0..self.hidden {
                g.w2[h] += d_out * a[h];
                d_h[h] = d_out * self.w2[h] * a[h] * (1.0 - a[h]);
                g.b1[h] += d_h[h];
            }
            for (col, &v) in g1_t.chunks_exact_mut(self.hidden).zip(xi) {
                for (gw, d) in col.iter_mut().zip(&d_h) {
                    *gw += d * v;
                }
            }
        }
        for h in 0..self.hidden {
            for j in 0..self.inputs {
                g.w1[h * self.inputs + j] = g1_t[j * self.hidden + h];
            }
        }
        let scale = 1.0 / n;
        for (gw, w) in g.w1.iter_mut().zip(&self.w1) {
            *gw = *gw * scale + alpha * w / n;
        }
        for (gw, w) in g.w2.iter_mut().zip(&self.w2) {
            *gw = *gw * scale + alpha * w / n;
        }
        g.b1.iter_mut().for_each(|v| *v *= scale);
        g.b2 *= scale;
        g
    }

    /// All parameters as one vector: `w1, b1, w2, b2`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + 2 * self.hidden + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.hidden);
        let (c, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = rest[0];
    }

    fn step(&mut self, grad: &MlpNet, lr: f64) {
        for (w, g) in self.w1.iter_mut().zip(&grad.w1) {
            *w -= lr * g;
        }
        for (w, g) in self.b1.iter_mut().zip(&grad.b1) {
            *w -= lr * g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grad.w2) {
            *w -= lr * g;
        }
        self.b2 -= lr * grad.b2;
    }
}

pub fn fit_mlp(x: &Matrix, y: &[u8], valid: Option<(&Matrix, &[u8])>, params: MlpParams, seed: u64) -> MlpNet {
    let mut net = MlpNet::init(x.cols, params.hidden.max(1), seed);
    let mut stopper = EarlyStopping::default();
    let mut plateau = LossPlateau::new(1e-4, 10);
    for _ in 0..params.max_iter {
        let g = net.gradient(x, y, params.alpha);
        net.step(&g, LEARNING_RATE);
        let stop = match valid.and_then(|(vx, vy)| {
            let s = net.decisions(vx);
            auc_opt(&s, vy)
        }) {
            Some(a) => stopper.update(a),
            None => plateau.update(net.loss(x, y, params.alpha)),
        };
        if stop {
            break;
        }
    }
    net
}
