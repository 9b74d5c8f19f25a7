// Negated comparisons such as `!(x > 0.0)` are how NaN is rejected alongside
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod classifier_pipeline;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod matrix;
pub mod model;
pub mod refmodel;
pub mod rng;
pub mod schema;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
