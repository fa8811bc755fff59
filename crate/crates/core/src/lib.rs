//! Costly-channel referential games with exact tabular training.
//!
//! A sender observes a goal drawn from a fixed (typically Zipfian)
//! distribution and emits one communicative action; a receiver observes the
//! action and predicts the goal. Actions carry common-knowledge energy
//! costs, which partition the action set into equivalence classes of
//! interchangeable messages. This crate trains tabular softmax policies for
//! that game with exact expected-loss gradients and provides:
//!
//! * self-play training (`training`), with optional max-filtering of runs,
//! * other-play training over a set of equivalence mappings (`symmetry`,
//!   `training::op_loss`),
//! * gradient-based discovery of equivalence mappings from pairs of trained
//!   policies, hardened to exact permutations (`symmetry::learn_mapping`),
//! * the iterative discovery loop that alternates training and mapping
//!   extraction until cross-play matches self-play (`qed`),
//! * cross-play evaluation, information-theoretic diagnostics, and table
//!   aggregation (`eval`, `report`),
//! * a config-driven experiment runner behind the `qedcomm` binary
//!   (`config`, `runner`).

// Numerics here walk several same-length tables in lockstep; explicit
// index loops are clearer than zipped iterator chains.
#![allow(clippy::needless_range_loop)]

pub mod assignment;
pub mod config;
pub mod error;
pub mod eval;
pub mod game;
pub mod mat;
pub mod policy;
pub mod qed;
pub mod report;
pub mod rng;
pub mod runner;
pub mod symmetry;
pub mod training;

pub use error::{Error, Result};
pub use game::{
    build_task, zipf_distribution, Channel, GoalDistribution, GoalKind, TaskKind, TaskSpec,
};
pub use policy::{accuracy, confusion, softmax_rows, ConfusionMatrix, JointPolicy};
pub use qed::{converged, qed_run, sp_score, xp_score, QedConfig, QedResult};
pub use symmetry::{
    apply_map, is_equivalence, learn_mapping, mapping_kl, EquivalenceMap, MappingLearnConfig,
    MappingSet,
};
pub use training::{max_filter, op_loss, sp_loss, train, LossBreakdown, TrainConfig, TrainedRun};
