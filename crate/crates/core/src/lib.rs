//! Volume-preserving kneading toolchain: shapes, slicing, classification,
//! command planning, ideal and simulated forming, registration and metrics.

// `!(x > 0.0)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod classifier;
pub mod contour;
pub mod error;
pub mod ideal;
pub mod mesh_io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod registration;
pub mod report;
pub mod shapes;
pub mod sim;
pub mod slicer;
pub mod stats;

pub use error::{Error, Result};
