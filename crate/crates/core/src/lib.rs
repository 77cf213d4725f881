//! Non-concave penalized generalized linear models (Bridge, SCAD, MCP) with
//! an AIC-type tuning-parameter selector, a cross-validation baseline, and a
//! reproducible simulation bench.

pub mod cli;
pub mod criterion;
pub mod error;
pub mod family;
pub mod fitter;
pub mod partinfo;
pub mod penalty;
pub mod rng;
pub mod simbench;

pub use criterion::{aic, cross_validate, estimate_k, select_lambda, solve_u1, AicReport, CvReport, Selector};
pub use error::{Error, Result};
pub use family::{information, log_likelihood, score_scaled, Dataset, Family};
pub use fitter::{fit, fit_path, FitConfig, FitResult, Init};
pub use partinfo::{partition, sample_gaussian, ActiveSetPartition, PartitionedInfo};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use rng::RngStream;
