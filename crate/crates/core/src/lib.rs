//! Active 3D mapping laboratory built around next-best-path planning.
//!
//! The crate covers procedural scenes ([`worldgen`]), depth sensing and
//! point accumulation ([`sensor`]), the exploration embedding
//! ([`progress`]), exact coverage metrics ([`coverage`]), goal selection and
//! routing ([`planning`]), training data ([`labels`]), the predictor and its
//! training loop ([`learner`]) and the benchmark harness ([`bench`]).

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod bench;
pub mod coverage;
pub mod error;
pub mod geom;
pub mod labels;
pub mod learner;
pub mod planning;
pub mod progress;
pub mod sensor;
pub mod spatial;
pub mod worldgen;

pub use error::{Error, Result};
