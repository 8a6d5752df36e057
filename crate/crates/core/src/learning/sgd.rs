//! Linear model on log-loss trained by per-sample stochastic gradient
//! descent with a constant step and L2 shrinkage.

use rand::seq::SliceRandom;

use super::auc::auc_opt;
use super::boost::sigmoid;
use super::encode::Matrix;
use super::{EarlyStopping, LossPlateau};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    pub alpha: f64,
    pub max_iter: usize,
    pub eta0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Linear {
    #[inline]
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn log_loss(model: &Linear, x: &Matrix, y: &[u8], alpha: f64) -> f64 {
    let n = x.rows.max(1) as f64;
    let data: f64 = (0..x.rows)
        .map(|i| {
            let z = model.decision(x.row(i));
            // log(1 + e^z) - y z, stable
            let sp = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            sp - f64::from(y[i]) * z
        })
        .sum::<f64>()
        / n;
    data + 0.5 * alpha * model.weights.iter().map(|w| w * w).sum::<f64>()
}

/// One pass = one epoch over shuffled rows. The shrink factor
/// `max(0, 1 - eta·alpha)` is applied before each gradient step, so very
/// large penalties zero the weights rather than flip their sign.
pub fn fit_sgd(x: &Matrix, y: &[u8], valid: Option<(&Matrix, &[u8])>, params: SgdParams, seed: u64) -> Linear {
    let mut rng = seed::rng(seed);
    let mut model = Linear {
        weights: vec![0.0; x.cols],
        bias: 0.0,
    };
    let shrink = (1.0 - params.eta0 * params.alpha).max(0.0);
    let mut order: Vec<usize> = (0..x.rows).collect();
    let mut stopper = EarlyStopping::default();
    let mut plateau = LossPlateau::new(1e-3, 5);
    for _ in 0..params.max_iter {
        order.shuffle(&mut rng);
        for &i in &order {
            let xi = x.row(i);
            let g = sigmoid(model.decision(xi)) - f64::from(y[i]);
            for (w, v) in model.weights.iter_mut().zip(xi) {
                *w = *w * shrink - params.eta0 * g * v;
            }
            model.bias -= params.eta0 * g;
        }
        let stop = match valid.and_then(|(vx, vy)| {
            let s: Vec<f64> = (0..vx.rows).map(|i| model.decision(vx.row(i))).collect();
            auc_opt(&s, vy)
        }) {
            Some(a) => stopper.update(a),
            None => plateau.update(log_loss(&model, x, y, params.alpha)),
        };
        if stop {
            break;
        }
    }
    model
}
