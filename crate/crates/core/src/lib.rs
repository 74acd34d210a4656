//! Diagnostic assessment generation by combinatorial search.
//!
//! A learner performance snapshot (questions x learners matrix of correct-answer
//! probabilities) is searched for a K-question subset that both represents the
//! whole pool (low RMSE between subset and pool means per learner) and
//! separates learners (high spread of subset means). See [`criteria`] for the
//! objective and [`search`] for the random, greedy, genetic and exhaustive
//! searches.
//!
//! Data-parallel loops (batch fitness evaluation, lambda calibration, learner
//! simulation, repeats) run on rayon with the default `parallel` feature and
//! sequentially without it; results are identical either way.

// `!(x > 0.0)` style checks are meant to reject NaN too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod search;
pub mod simulator;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use criteria::{CriteriaContext, FitnessReport, Objective};
pub use error::{Error, Result};
pub use model::{
    build_pool, split_learners, Assessment, IdMap, Interaction, InteractionLog, LearnerId,
    LearnerSplit, Pool, QuestionId, Snapshot,
};
pub use par::Execution;
pub use search::{Algorithm, GaConfig, SearchResult};
