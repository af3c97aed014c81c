//! Optimistic allocation for the linear stochastic resource-allocation bandit.
//!
//! A unit budget is split every step among `K` recurring jobs. Job `k`
//! succeeds with probability `min{1, M_k/ν_k}` for an unknown difficulty
//! `ν_k`. The policy fills the budget greedily using high-probability lower
//! bounds on each `ν_k`, learned by a weighted reciprocal estimator.
//!
//! Modules:
//! - [`model`]: environment, optimal allocation, pseudo-regret.
//! - [`estimator`]: per-job confidence intervals.
//! - [`allocator`]: the greedy optimistic policy, episode runner and regret bound.
//! - [`init`]: halving initialization and the self-initializing variant.
//! - [`harness`]: Monte-Carlo experiments, minimax stress test, CSV output.

pub mod allocator;
mod episode;
pub use episode::EpisodeSummary;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod harness;
pub mod init;
pub mod io;
pub mod model;
pub mod seeding;
pub mod stats;

pub use allocator::{allocate, run_episode, run_episode_summary, theorem1_bound, PolicyOptions, RunTrace, StepRecord};
pub use error::{Error, Result};
pub use estimator::{confidence_radius, EstimatorState, Weighting};
pub use exec::Executor;
pub use harness::{emit_csv, minimax_family, minimax_stress, run_experiment, ExperimentConfig, ExperimentResult};
pub use init::{halving_init, init_budget, run_modified, run_modified_summary, sample_eta, InitRecord};
pub use model::{
    beta, brute_force_optimal, instantaneous_regret, optimal_profile, sample_step, Allocation, Observation,
    OptimalProfile, ProblemInstance,
};
