//! Covariate-informed random partition models (PPMx) fitted by MCMC,
//! association rules mined inside posterior clusters, and Polya-tree
//! k-sample tests on posterior predictive draws for screening pairwise
//! covariate interactions.

pub mod data;
pub mod discretize;
pub mod error;
pub mod pipeline;
pub mod ppmx;
pub mod ptest;
pub mod rules;
pub mod sampler;
pub mod seed;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
