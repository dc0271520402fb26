//! Radio environment map estimation on a hexagonal tile graph.
//!
//! Sparse geo-located RSRP/RSRQ measurements are binned into hexagonal
//! tiles, tiles become nodes of an adjacency graph, and a graph
//! convolutional network (or a fully connected baseline) estimates signal
//! quality for every tile, including those without measurements.

pub mod error;
pub mod eval;
pub mod export;
pub mod features;
pub mod graph;
pub mod hexgrid;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
