//! Grid-level traffic density estimation from probe trajectories and loop
//! detectors, and partitioning of the resulting grid network into
//! homogeneous regions.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod fusion;
pub mod graph;
pub mod gridding;
pub mod ingest;
pub mod partition;
pub mod metrics;
pub mod scenario;
