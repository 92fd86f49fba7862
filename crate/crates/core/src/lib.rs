//! Road-segment criticality ranking from OD-flow structure.
//!
//! The crate builds a heterogeneous trip graph (OD pairs, paths, segments) and
//! three attribute-guided graphs from a road network with OD flows, samples
//! joint heterogeneous walks over them, encodes the walks with a small
//! Transformer, pools every segment's contexts with attention-based
//! multiple-instance pooling and ranks segments with a listwise KL objective.
//! Ground-truth importance comes from a deterministic cascade-failure
//! surrogate, and the evaluation metrics (NDCG@K, EMD, Diff, Kendall's tau)
//! ship with brute-force oracles.
//!
//! Module map:
//!
//! * [`network`]: road networks, OD flows, paths, dataset I/O and generation
//! * [`tripgraph`]: trip graph, attribute-guided graphs, normalized kernels
//! * [`walk`]: alias sampling, HetGWalk and Markov-chain verification
//! * [`nn`]: encoder, AMIL pooling, ranking head and their gradients
//! * [`ranker`]: listwise loss, list sampling, training and full ranking
//! * [`groundtruth`]: cascade surrogate and importance scores
//! * [`metrics`]: ranking metrics
//! * [`config`] / [`pipeline`]: run configuration and staged orchestration

pub mod config;
pub mod error;
pub mod groundtruth;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod pipeline;
pub mod provenance;
pub mod ranker;
pub mod tripgraph;
pub mod walk;

pub use error::{Error, Result};
