//! Experiment runner for the belief-simplify planners.
//!
//! Runs seeded episodes, checks that simplified planners agree with their exact baselines,
//! computes the speedup metrics and writes CSV and SVG results.

pub mod bounds_study;
pub mod config;
pub mod consistency;
pub mod emit;
pub mod episode;
pub mod metrics;
pub mod plots;

use thiserror::Error;

pub use bounds_study::{bounds_study, BoundsStudyConfig, BoundsStudyRow, LevelBounds};
pub use config::{PlannerKind, RunConfig};
pub use consistency::{run_consistency_experiment, ConsistencyReport, TrialCheck};
pub use emit::{emit_bounds_study, emit_results, EmitOptions};
pub use episode::{plan_once, run_episode, run_trials, EpisodeOptions, PlanOutcome, RunLedger, SessionRecord, TrialResult};
pub use metrics::{particle_speedup, time_speedup};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{planner} cannot run on this configuration: {reason}")]
    Unsupported { planner: &'static str, reason: String },
    #[error("consistency violation in trial with seed {seed}: {diff}")]
    ConsistencyViolation { seed: u64, diff: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Scenario(#[from] belief_simplify::scenarios::ScenarioError),
    #[error(transparent)]
    Plan(#[from] belief_simplify::given_tree::PlanError),
    #[error(transparent)]
    Mcts(#[from] belief_simplify::mcts::MctsError),
    #[error(transparent)]
    Model(#[from] belief_simplify::models::ModelError),
    #[error(transparent)]
    Reward(#[from] belief_simplify::reward::RewardError),
    #[error(transparent)]
    Entropy(#[from] belief_simplify::entropy::EntropyError),
    #[error(transparent)]
    Belief(#[from] belief_simplify::belief::BeliefError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("plotting failed: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
