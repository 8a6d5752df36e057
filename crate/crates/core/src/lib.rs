//! Privacy-configuration recommendation for tabular data.
//!
//! The crate covers three phases:
//!
//! * protection: profile re-identification risk over quasi-identifiers and
//!   replace the highest-risk records with synthetic interpolants
//!   ([`riskprofile`], [`synth`]);
//! * development: measure each protected variant's predictive utility with a
//!   multi-fidelity learner search and its linkability risk
//!   ([`learning`], [`cash`], [`linkattack`], [`metafeat`]);
//! * prediction: fit twin linear meta-models and rank the configuration grid
//!   for an unseen dataset ([`metamodel`]).
//!
//! Numeric kernels are generic over [`Scalar`]; the aliases below fix them to
//! `f64`, which is what the pipeline uses.

pub mod cash;
pub mod error;
pub mod gower;
pub mod learning;
pub mod linkattack;
pub mod metafeat;
pub mod metamodel;
pub mod pipeline;
pub mod riskprofile;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tabular::{Dataset, Holdout};

pub type MetaModel = metamodel::MetaModel<f64>;
pub type RankedConfig = metamodel::RankedConfig<f64>;
pub type SignTestResult = stats::SignTestResult<f64>;
pub type RopeVerdict = stats::RopeVerdict<f64>;
pub type GowerView = gower::GowerView<f64>;
