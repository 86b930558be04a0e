//! Planning over a fixed, externally built belief tree.
//!
//! [`build_sparse_sampling_tree`] grows the tree; [`ss_solve`], [`sith_bsp_solve`] and
//! [`lazy_bsp_plan`] solve it. All three return the same root action.

mod lazy;
mod sith;
mod ss;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::BeliefError;
use crate::models::{ModelCalls, ModelError};
use crate::problem::Problem;
use crate::reward::{composite_reward, composite_reward_bounds, RewardError, RewardInterval};
use crate::scalar::Scalar;

pub use lazy::{lazy_bsp_plan, LazyBsp};
pub use sith::{prune, sith_bsp_solve, SithBsp};
pub use ss::{ss_solve, SsSolution};
pub use tree::{build_sparse_sampling_tree, node_count, BeliefTree, TreeNode, TreeOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("invalid tree options: {0}")]
    InvalidOptions(String),
    #[error("observation branch rejected {0} times in a row")]
    TooManyRedraws(usize),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

pub type Result<T> = std::result::Result<T, PlanError>;

/// Level at which SITH-BSP first evaluates each reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum InitialRewardLevel {
    /// Level 1.
    #[default]
    Coarsest,
    /// The child's value level (the finest level for leaves).
    ChildValueLevel,
    Fixed(usize),
}

/// Lower/upper bounds on `Q(b, a_j)` with their simplification level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QBoundsEntry<T> {
    pub action: usize,
    pub lower: T,
    pub upper: T,
    pub level: usize,
    pub pruned: bool,
}

impl<T: Scalar> QBoundsEntry<T> {
    pub fn gap(&self) -> T {
        self.upper - self.lower
    }
}

/// Work counters of one solve.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    pub calls: ModelCalls,
    pub resimplifications: u64,
    pub promotions: u64,
}

/// Outcome of a given-tree solve.
#[derive(Debug, Clone, PartialEq)]
pub struct GivenTreeSolution<T> {
    /// Index into the root's action list.
    pub best_action: usize,
    pub root_q: Vec<QBoundsEntry<T>>,
    pub stats: SolveStats,
    /// Final `(depth, particles used)` of every non-root node's reward.
    pub node_levels: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GivenTreePlanner {
    Ss,
    SithBsp,
    LazyBsp,
}

impl GivenTreePlanner {
    pub fn name(&self) -> &'static str {
        match self {
            GivenTreePlanner::Ss => "ss",
            GivenTreePlanner::SithBsp => "sith-bsp",
            GivenTreePlanner::LazyBsp => "lazy-bsp",
        }
    }
}

/// Runs the chosen planner on a tree.
pub fn solve_given_tree<T: Scalar>(
    planner: GivenTreePlanner,
    tree: &BeliefTree<T>,
    problem: &Problem<T>,
    initial_level: InitialRewardLevel,
) -> Result<GivenTreeSolution<T>> {
    match planner {
        GivenTreePlanner::Ss => ss_solve(tree, problem).map(|s| s.solution),
        GivenTreePlanner::SithBsp => sith_bsp_solve(tree, problem, initial_level),
        GivenTreePlanner::LazyBsp => lazy_bsp_plan(tree, problem),
    }
}

/// Reward of the edge into `node`, exact or bounded at `level` using the node's index chain.
pub(crate) fn edge_reward<T: Scalar>(
    tree: &BeliefTree<T>,
    problem: &Problem<T>,
    node: usize,
    level: Option<usize>,
    calls: &mut ModelCalls,
) -> Result<RewardInterval<T>> {
    let n = &tree.nodes()[node];
    let parent = &tree.nodes()[n.parent.expect("root has no reward")];
    let action = n.action.as_ref().unwrap();
    let input = problem.input(&parent.belief, action, &n.observation, &n.belief);
    let n_max = tree.schedule().n_max();
    match level {
        None => {
            let v = composite_reward(&input, &problem.reward, calls)?;
            Ok(RewardInterval::exact(v, n_max, n.belief.len()))
        }
        Some(level) => {
            let set = n.chain.level(level)?;
            Ok(composite_reward_bounds(&input, &set, &set, &problem.reward, problem.m, calls)?)
        }
    }
}

/// Promotes the reward of the edge into `node` by one level; `false` if already exact.
pub(crate) fn promote_edge<T: Scalar>(
    tree: &BeliefTree<T>,
    problem: &Problem<T>,
    node: usize,
    reward: &mut RewardInterval<T>,
    calls: &mut ModelCalls,
) -> Result<bool> {
    if !reward.can_promote() {
        return Ok(false);
    }
    let n = &tree.nodes()[node];
    let parent = &tree.nodes()[n.parent.unwrap()];
    let input = problem.input(&parent.belief, n.action.as_ref().unwrap(), &n.observation, &n.belief);
    let next = n.chain.level(reward.level() + 1)?;
    Ok(reward.promote(&input, &next, &next, calls)?)
}

/// `Q = (1/n_z) Σ_i (ρ_i + γ V_i)` for lower and upper bounds separately.
pub(crate) fn q_from_children<T: Scalar>(
    children: &[usize],
    reward: impl Fn(usize) -> (T, T),
    value: impl Fn(usize) -> (T, T),
    gamma: T,
) -> (T, T) {
    let mut lo = T::zero();
    let mut hi = T::zero();
    for &c in children {
        let (rl, rh) = reward(c);
        let (vl, vh) = value(c);
        lo = lo + (rl + gamma * vl);
        hi = hi + (rh + gamma * vh);
    }
    let n = T::from_usize(children.len()).unwrap();
    (lo / n, hi / n)
}
