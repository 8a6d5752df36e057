//! Percentage differences, ROPE classification and the Bayesian sign test.

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

pub const ROPE_LO: f64 = -1.0;
pub const ROPE_HI: f64 = 1.0;
pub const DEFAULT_MC_SAMPLES: usize = 50_000;

/// `(r_a − r_b) / r_b · 100`.
pub fn pct_diff<T: Scalar>(r_a: T, r_b: T) -> Result<T> {
    if r_b == T::zero() {
        return Err(Error::InvalidArgument("percentage difference against zero".into()));
    }
    Ok((r_a - r_b) / r_b * T::lit(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Lose,
    Draw,
    Win,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeVerdict<T> {
    pub outcome: Outcome,
    pub diff_pct: T,
}

/// Boundary values count as draws.
pub fn rope_classify<T: Scalar>(diff_pct: T, lo: T, hi: T) -> Result<RopeVerdict<T>> {
    if lo >= hi {
        return Err(Error::InvalidArgument(format!("ROPE bounds {lo} >= {hi}")));
    }
    let outcome = if diff_pct > hi {
        Outcome::Win
    } else if diff_pct < lo {
        Outcome::Lose
    } else {
        Outcome::Draw
    };
    Ok(RopeVerdict { outcome, diff_pct })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignTestResult<T> {
    pub p_lose: T,
    pub p_draw: T,
    pub p_win: T,
    /// `(n_lose, n_draw, n_win)`.
    pub counts: (usize, usize, usize),
    pub mc_samples: usize,
    pub seed: u64,
}

/// Posterior over (lose, draw, win) is
/// `Dirichlet(counts + w/3 + (0, 1, 0))`; each Monte-Carlo draw credits the
/// region holding the strict maximum, with exact ties going to draw.
pub fn bayes_sign_test<T: Scalar>(
    diffs: &[T],
    lo: T,
    hi: T,
    prior_weight: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<SignTestResult<T>> {
    if diffs.is_empty() {
        return Err(Error::InvalidArgument("sign test needs at least one difference".into()));
    }
    if mc_samples == 0 || prior_weight < 0.0 {
        return Err(Error::InvalidArgument(
            "mc_samples must be positive and prior_weight non-negative".into(),
        ));
    }
    let mut counts = [0usize; 3];
    for &d in diffs {
        let slot = match rope_classify(d, lo, hi)?.outcome {
            Outcome::Lose => 0,
            Outcome::Draw => 1,
            Outcome::Win => 2,
        };
        counts[slot] += 1;
    }
    let share = prior_weight / 3.0;
    let alpha = [
        counts[0] as f64 + share,
        counts[1] as f64 + share + 1.0,
        counts[2] as f64 + share,
    ];
    let mut gammas = Vec::with_capacity(3);
    for a in alpha {
        // a = 0 only when a class is empty and the prior weight is 0
        gammas.push(if a > 0.0 {
            Some(Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        });
    }
    let mut rng = seed::rng(seed);
    let mut hits = [0usize; 3];
    for _ in 0..mc_samples {
        let g: Vec<f64> = gammas
            .iter()
            .map(|d| d.as_ref().map_or(0.0, |d| d.sample(&mut rng)))
            .collect();
        // normalizing by the sum does not change the argmax
        let region = if g[0] > g[1] && g[0] > g[2] {
            0
        } else if g[2] > g[0] && g[2] > g[1] {
            2
        } else {
            1
        };
        hits[region] += 1;
    }
    let n = T::from_usize_lossy(mc_samples);
    let p = |h: usize| T::from_usize_lossy(h) / n;
    Ok(SignTestResult {
        p_lose: p(hits[0]),
        p_draw: p(hits[1]),
        p_win: p(hits[2]),
        counts: (counts[0], counts[1], counts[2]),
        mc_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pct_diff_formula() {
        assert_eq!(pct_diff(0.7, 0.7).unwrap(), 0.0);
        assert!((pct_diff(0.707, 0.700).unwrap() - 1.0f64).abs() < 1e-12);
        assert!(pct_diff(1.0, 0.0).is_err());
    }

    #[test]
    fn rope_boundaries() {
        let c = |d: f64| rope_classify(d, ROPE_LO, ROPE_HI).unwrap().outcome;
        assert_eq!(c(0.5), Outcome::Draw);
        assert_eq!(c(1.0), Outcome::Draw);
        assert_eq!(c(-1.0), Outcome::Draw);
        assert_eq!(c(2.0), Outcome::Win);
        assert_eq!(c(-3.0), Outcome::Lose);
        assert!(rope_classify(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn sign_test_sums_to_one() {
        let r = bayes_sign_test(&[0.2, 3.0, -4.0, 0.0], ROPE_LO, ROPE_HI, 1.0, 2000, 3).unwrap();
        assert_eq!(r.counts, (1, 2, 1));
        assert!((r.p_lose + r.p_draw + r.p_win - 1.0f64).abs() < 1e-12);
        assert!(bayes_sign_test::<f64>(&[], ROPE_LO, ROPE_HI, 1.0, 10, 0).is_err());
    }
}
