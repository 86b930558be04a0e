//! Anytime planners that grow the belief tree while solving it: PFT-DPW and SITH-PFT.
//!
//! Both planners draw every random quantity from [`crate::rng::stream`] keyed by node ids and
//! visit counts, so under a shared seed they build the same tree as long as they pick the same
//! actions. SITH-PFT guarantees the latter by resolving bound overlap before every choice.

mod pft;
mod sith;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, WeightedParticleBelief};
use crate::models::{pf_update, sample_observation, Action, ModelCalls, ModelError};
use crate::problem::Problem;
use crate::reward::{terminal_reward, RewardError};
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

pub use pft::pft_dpw_plan;
pub use sith::{sith_pft_plan, SithPft};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MctsError {
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("no action at the root was visited")]
    NoVisitedAction,
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

pub type Result<T> = std::result::Result<T, MctsError>;

/// Double progressive widening and search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpwConfig {
    pub k_o: f64,
    pub alpha_o: f64,
    pub k_a: f64,
    pub alpha_a: f64,
    /// UCB exploration constant.
    pub c: f64,
    /// Maximal simulation depth.
    pub depth: usize,
    pub iterations: usize,
}

impl Default for DpwConfig {
    fn default() -> Self {
        Self { k_o: 2.0, alpha_o: 0.1, k_a: 4.0, alpha_a: 0.25, c: 40.0, depth: 30, iterations: 200 }
    }
}

impl DpwConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.k_o > 0.0 && self.k_a > 0.0) {
            return Err("k_o and k_a must be positive".into());
        }
        let unit = |a: f64| a > 0.0 && a < 1.0;
        if !(unit(self.alpha_o) && unit(self.alpha_a)) {
            return Err("α_o and α_a must lie in (0, 1)".into());
        }
        if !(self.c >= 0.0) {
            return Err("c must be non-negative".into());
        }
        if self.depth == 0 {
            return Err("depth must be positive".into());
        }
        Ok(())
    }

    fn widen(k: f64, alpha: f64, children: usize, visits: u64) -> bool {
        children as f64 <= k * (visits as f64).powf(alpha)
    }

    pub(crate) fn widen_actions(&self, children: usize, visits: u64) -> bool {
        Self::widen(self.k_a, self.alpha_a, children, visits)
    }

    pub(crate) fn widen_observations(&self, children: usize, visits: u64) -> bool {
        Self::widen(self.k_o, self.alpha_o, children, visits)
    }
}

/// Per-run settings shared by both planners.
#[derive(Debug, Clone, PartialEq)]
pub struct MctsOptions {
    pub dpw: DpwConfig,
    pub seed: u64,
    /// Absolute time step of the root.
    pub base_step: usize,
    /// Keep a per-simulation trace of the visited path.
    pub record_trace: bool,
}

impl MctsOptions {
    pub fn new(dpw: DpwConfig, seed: u64) -> Self {
        Self { dpw, seed, base_step: 0, record_trace: false }
    }
}

/// UCB interval `(Q̲ + c√(ln N(h)/N(ha)), Q̄ + c√(ln N(h)/N(ha)))`.
pub fn ucb_bounds<T: Scalar>(q_lower: T, q_upper: T, n_h: u64, n_ha: u64, c: T) -> (T, T) {
    let bonus = c * (T::from_u64(n_h).unwrap().ln() / T::from_u64(n_ha).unwrap()).sqrt();
    (q_lower + bonus, q_upper + bonus)
}

/// One step of a simulation: the belief node, the chosen action id and the observation child taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub node: usize,
    pub action: usize,
    pub child: Option<usize>,
    pub expanded: bool,
}

/// Structure of a built tree: what tree consistency compares.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TreeSignature {
    /// Per belief node: parent action node, visit count, observation bits.
    pub nodes: Vec<(Option<usize>, u64, Vec<u64>)>,
    /// Per action node: parent belief node, action id, visit count, `(child, edge visits)`.
    pub actions: Vec<(usize, usize, u64, Vec<(usize, u64)>)>,
}

/// Final simplification level of a reward in a SITH-PFT tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardLevelRecord {
    pub node: usize,
    pub depth: usize,
    /// Index of the root action whose subtree holds the node.
    pub root_action: usize,
    pub level: usize,
    pub rollout_levels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MctsStats {
    pub calls: ModelCalls,
    pub simulations: u64,
    pub resimplifications: u64,
    pub promotions: u64,
    pub reconstructions: u64,
    /// Observation branches or rollouts abandoned because the observation had zero likelihood.
    pub zero_likelihood: u64,
    /// Passes that needed the progress guard.
    pub guard_passes: u64,
}

/// Root statistics of one action node.
#[derive(Debug, Clone, PartialEq)]
pub struct RootAction<T> {
    pub action_index: usize,
    pub visits: u64,
    pub q_lower: T,
    pub q_upper: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MctsResult<T> {
    /// Index into the root's action list.
    pub best_action: usize,
    pub root: Vec<RootAction<T>>,
    pub stats: MctsStats,
    pub tree: TreeSignature,
    pub trace: Vec<Vec<TraceStep>>,
    /// Empty for PFT-DPW.
    pub levels: Vec<RewardLevelRecord>,
}

pub(crate) fn terminal_value<T: Scalar>(problem: &Problem<T>, belief: &WeightedParticleBelief<T>) -> T {
    match &problem.reward.terminal {
        Some(t) => terminal_reward(belief, t),
        None => T::zero(),
    }
}

/// Draws the `draw`-th new observation child of action node `ha`.
pub(crate) fn expand_child<T: Scalar>(
    problem: &Problem<T>,
    belief: &WeightedParticleBelief<T>,
    action: &Action<T>,
    seed: u64,
    ha: usize,
    draw: u64,
) -> std::result::Result<(Vec<T>, WeightedParticleBelief<T>), ModelError> {
    let (tr, ob) = (problem.transition.as_ref(), problem.observation.as_ref());
    let mut rng = stream(seed, Purpose::ObservationSampling, ha as u64, draw);
    let (_, z) = sample_observation(belief, action, tr, ob, &mut rng);
    let mut rng = stream(seed, Purpose::ParticlePropagation, ha as u64, draw);
    let post = pf_update(belief, action, &z, tr, ob, &mut rng)?;
    Ok((z, post))
}

/// One step of a rollout; `post` is `None` for a terminal action.
#[derive(Debug, Clone)]
pub(crate) struct RolloutLink<T> {
    pub action: Action<T>,
    pub observation: Vec<T>,
    pub post: Option<WeightedParticleBelief<T>>,
}

/// Uniform random rollout of at most `steps` steps from `start`. The flag reports a truncation
/// caused by a zero-likelihood observation.
pub(crate) fn rollout_trajectory<T: Scalar>(
    problem: &Problem<T>,
    start: &WeightedParticleBelief<T>,
    start_step: usize,
    steps: usize,
    seed: u64,
    node: usize,
) -> (Vec<RolloutLink<T>>, bool) {
    use rand::Rng;
    let (tr, ob) = (problem.transition.as_ref(), problem.observation.as_ref());
    let mut rng = stream(seed, Purpose::Rollout, node as u64, 0);
    let mut links: Vec<RolloutLink<T>> = Vec::with_capacity(steps);
    for t in 0..steps {
        let actions = problem.actions.at(start_step + t);
        let action = actions[rng.random_range(0..actions.len())].clone();
        if action.terminal {
            links.push(RolloutLink { action, observation: Vec::new(), post: None });
            break;
        }
        let prev = links.last().and_then(|l| l.post.as_ref()).unwrap_or(start);
        let (_, z) = sample_observation(prev, &action, tr, ob, &mut rng);
        match pf_update(prev, &action, &z, tr, ob, &mut rng) {
            Ok(post) => links.push(RolloutLink { action, observation: z, post: Some(post) }),
            Err(_) => return (links, true),
        }
    }
    (links, false)
}

/// Picks an action not yet in `used` for node `h`, uniformly at random.
pub(crate) fn next_action<T: Scalar>(actions: &[Action<T>], used: &[usize], seed: u64, h: usize) -> Option<usize> {
    use rand::Rng;
    let free: Vec<usize> = (0..actions.len()).filter(|j| !used.contains(j)).collect();
    if free.is_empty() {
        return None;
    }
    let mut rng = stream(seed, Purpose::ActionWidening, h as u64, used.len() as u64);
    Some(free[rng.random_range(0..free.len())])
}

/// Uniform choice among `n` existing observation children of `ha` at its `visits`-th visit.
pub(crate) fn pick_child(seed: u64, ha: usize, visits: u64, n: usize) -> usize {
    use rand::Rng;
    stream(seed, Purpose::DpwChildChoice, ha as u64, visits).random_range(0..n)
}

pub(crate) fn obs_bits<T: Scalar>(z: &[T]) -> Vec<u64> {
    z.iter().map(|v| v.to_f64().unwrap().to_bits()).collect()
}
