//! Counterfactual-evidence search for graph node classifiers: KS similarity
//! over propagated neighbourhood features, a spherical index over the test
//! nodes, and metrics over the results.

pub mod analysis;
pub mod artifact;
pub mod cli;
pub mod error;
pub mod graph;
pub mod index;
pub mod ks;
pub mod matrix;
pub mod model;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{FeatureMatrix, Graph, NodeId, SplitAssignment};
pub use index::{build_index, IndexParams, SphericalIndex};
pub use ks::{aggregated_vectors, AggregatedTable, KsParams};
pub use model::PredictionTable;
pub use search::{CeQueryResult, CeSearcher, GcePair, GlobalStrategy, Hit, SearchMode};
