//! Edge-based graph component pooling.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] and [`components`]: sparse graphs and weakly connected components.
//! * [`pool`]: the learned component pooling operator, its unpool inverse and
//!   its backward pass; [`edgepool`] is the greedy contraction baseline.
//! * [`nn`]: a small hand-differentiated GNN stack (graph convolution,
//!   pooling, readout, dense layers, Adam).
//! * [`data`]: TU benchmark parsing, feature synthesis and splits.
//! * [`train`], [`stats`] and [`scaling`]: experiment protocol, significance
//!   tests and complexity measurements.

pub mod components;
pub mod container;
pub mod data;
pub mod edgepool;
pub mod error;
pub mod generate;
pub mod graph;
pub mod nn;
pub mod pool;
pub mod scaling;
pub mod stats;
pub mod train;

pub use components::{connected_components, ClusterAssignment, UnionFind};
pub use edgepool::{edgepool_contract, ContractionPlan};
pub use error::{Error, Result};
pub use graph::{build_graph, Adjacency, Edge, Graph, Symmetry};
pub use pool::{
    pool, pool_backward, unpool, Activation, EdgeScorer, MergeSelection, PoolGradients, PoolResult,
    WeightMatrix,
};
