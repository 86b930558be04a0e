//! Belief-space planning with adaptively simplified information-theoretic rewards.

pub mod belief;
pub mod entropy;
pub mod given_tree;
pub mod mcts;
pub mod models;
pub mod problem;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod scenarios;

pub use scalar::Scalar;

/// Double-precision aliases for the common types.
pub type Belief = belief::WeightedParticleBelief<f64>;
pub type BeliefTree = given_tree::BeliefTree<f64>;
pub type BoundsState = entropy::EntropyBoundsState<f64>;
pub type Reward = reward::RewardInterval<f64>;
pub type PlanningProblem = problem::Problem<f64>;
