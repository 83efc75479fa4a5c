//! Posterior Bootstrap: parallel weighted-likelihood sampling with prior
//! information, automatic prior-weight rules, hierarchical variants and
//! second-order diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod edgeworth;
pub mod error;
pub mod experiment;
pub mod hierarchical;
pub mod info;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod samplers;
pub mod solve;
pub mod special;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{Dataset, Domain, ParamVector, ParametricModel, Prior};
pub use rng::RngStream;
pub use samplers::{DrawSet, RunConfig};
pub use solve::{PenaltyWeight, SolveConfig, WeightVector};
