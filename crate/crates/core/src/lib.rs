//! Exemplar clustering by affinity propagation, with an optional network
//! constraint: when the data points are the vertices of a graph, a point may
//! only choose an exemplar inside its topological neighborhood.
//!
//! The typical pipeline is
//!
//! 1. build a [`SimilarityMatrix`] from features,
//! 2. build a [`NeighborhoodMask`] from a [`Graph`] (geometric mode only),
//! 3. fix the shared preference, directly or by [`calibrate_preference`],
//! 4. call [`engine::run`] and score the labels with [`evaluation`].

pub mod affinity;
pub mod data_io;
pub mod engine;
mod error;
pub mod evaluation;
pub mod graph;
pub mod harness;

pub use affinity::{calibrate_preference, FeatureMatrix, FeatureMetric, SimilarityMatrix};
pub use engine::{ClusteringResult, EngineConfig, Mode};
pub use error::{Error, Result};
pub use graph::{Graph, NeighborhoodMask, TopoDistance};
