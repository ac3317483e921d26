//! Fake reviewer group detection on dynamic reviewer–product graphs.
//!
//! The pipeline turns a timestamped review stream into a bipartite graph
//! ([`graph`]), scores every node by neighbour diversity and ego-network
//! self-similarity ([`structure`], [`nfs`]), pools the graph per time window
//! ([`pool`]) and classifies reviewers with a dynamic graph attention
//! network ([`dga`]). [`synth`] generates labelled benchmarks with planted
//! groups and [`metrics`] evaluates everything.

pub mod autodiff;
pub mod config;
pub mod dga;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod nfs;
pub mod pipeline;
pub mod pool;
pub mod structure;
pub mod synth;

pub use error::{Error, Result};
