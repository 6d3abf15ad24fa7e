//! Policy-gradient training for the dispatch policy.
//!
//! The estimator is plain episodic policy gradient with a greedy-rollout
//! baseline: sampled solutions are weighted by their makespan advantage
//! over a frozen copy of the best model decoding greedily, and the
//! baseline copy is refreshed only when a paired t-test says the
//! candidate is statistically better. Test-time refinement comes in two
//! flavors: full-parameter active search on a single instance, and
//! embedding-only search that keeps every model weight frozen.

pub mod adam;
pub mod config;
mod par;
pub mod reinforce;
pub mod search;
pub mod stats;

pub use adam::Adam;
pub use config::TrainerConfig;
pub use reinforce::{
    greedy_mean, log_to_csv, reinforce_epoch, train, ttest_update, BaselineState, EpochMetrics,
    LogRow, TTestDecision, TrainData, TrainRun,
};
pub use search::{active_search, eas_emb, sample_search, SearchResult};
pub use stats::{paired_t_test, student_t_cdf, TTest};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value during training ({context})")]
    NonFinite { context: String },

    #[error(transparent)]
    Policy(#[from] jsp_policy::PolicyError),

    #[error(transparent)]
    Core(#[from] jsp_core::Error),
}
