//! Regenerates the bundled corpus under `corpus/`.
//!
//! Numeric predictors are integers on 30+ levels (ages, amounts), so nearly
//! every quasi-identifier tuple is unique and gets replaced; categorical
//! predictors have two or three levels and are kept rare for the same reason.
//! Predictors share a weak latent factor and the class depends on every third
//! predictor through a logistic link.
//!
//! Run with `cargo run --example make_corpus -- <out_dir>`.

use std::fs::File;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use autopriv::seed;

struct Spec {
    name: &'static str,
    rows: usize,
    numeric: usize,
    categorical: usize,
    /// Levels of the even categorical predictors; odd ones get one more.
    base_levels: usize,
    /// Weight of the shared latent factor in each predictor.
    loading: f64,
}

const SPECS: [Spec; 3] = [
    Spec {
        name: "census",
        rows: 1200,
        numeric: 9,
        categorical: 1,
        base_levels: 3,
        loading: 0.3,
    },
    Spec {
        name: "credit",
        rows: 1200,
        numeric: 9,
        categorical: 1,
        base_levels: 2,
        loading: 0.4,
    },
    Spec {
        name: "clinic",
        rows: 1200,
        numeric: 10,
        categorical: 0,
        base_levels: 2,
        loading: 0.2,
    },
];

const LETTERS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn main() -> std::io::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&out)?;
    for spec in &SPECS {
        let mut rng = seed::rng(seed::derive_seed(2024, &["corpus", spec.name]));
        let p = spec.numeric + spec.categorical;
        let levels: Vec<usize> = (0..p)
            .map(|j| {
                if j < spec.numeric {
                    30 + j
                } else {
                    spec.base_levels + j % 2
                }
            })
            .collect();
        let weights: Vec<f64> = (0..p)
            .map(|j| if j % 3 == 0 { 1.2 - 0.1 * j as f64 } else { 0.0 })
            .collect();
        let mut w = csv::Writer::from_writer(File::create(out.join(format!("{}.csv", spec.name)))?);
        let mut header: Vec<String> = (0..p)
            .map(|j| {
                if j < spec.numeric {
                    format!("x{j}")
                } else {
                    format!("c{j}")
                }
            })
            .collect();
        header.push("class".into());
        w.write_record(&header)?;
        for _ in 0..spec.rows {
            let latent: f64 = rng.sample(StandardNormal);
            let mut logit = -0.3;
            let mut rec = Vec::with_capacity(p + 1);
            for j in 0..p {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let z = spec.loading * latent + (1.0 - spec.loading * spec.loading).sqrt() * noise;
                let u = 0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2));
                let v = ((u * levels[j] as f64) as usize).min(levels[j] - 1);
                logit += weights[j] * (v as f64 / (levels[j] - 1) as f64 - 0.5) * 2.0;
                rec.push(if j < spec.numeric {
                    v.to_string()
                } else {
                    LETTERS[v].to_string()
                });
            }
            let prob = 1.0 / (1.0 + (-logit).exp());
            rec.push(if rng.random::<f64>() < prob {
                "yes".into()
            } else {
                "no".into()
            });
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Abramowitz–Stegun 7.1.26; accurate to 1.5e-7, ample for binning.
fn erf(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.327_591_1 * x.abs());
    let y = 1.0
        - (((((1.061_405_429 * t - 1.453_152_027) * t) + 1.421_413_741) * t - 0.284_496_736) * t + 0.254_829_592)
            * t
            * (-x * x).exp();
    if x >= 0.0 {
        y
    } else {
        -y
    }
}
