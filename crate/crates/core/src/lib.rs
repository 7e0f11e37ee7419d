//! Reputation-based item ranking with demographic reputation independence.
//!
//! The crate computes non-personalized item rankings as reputation-weighted
//! averages of user ratings, post-processes the reputations so their
//! distributions match across demographic groups (single- or multi-attribute),
//! and evaluates the result: disparate-reputation tables with location tests,
//! rank-correlation robustness under rating attacks, and held-out ranking
//! quality.
//!
//! Inner loops (the two engine update steps, attack sweeps) are data-parallel
//! via rayon when the default `parallel` feature is enabled; building with
//! `--no-default-features` gives a dependency-free sequential fallback with
//! bit-identical output.

pub mod attack;
pub mod engine;
pub mod independence;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod testdata;

mod par;

pub use engine::{
    arithmetic_average, compute, update_rankings, update_reputations, ComputeOutcome,
    EngineConfig, RankingVector, ReputationVector,
};
pub use model::{
    build_partition, AttributeSchema, GroupPartition, ItemIdx, RatingsMatrix, UserIdx,
    UserProfiles,
};
pub use pipeline::{Dataset, Method, Mitigation};
