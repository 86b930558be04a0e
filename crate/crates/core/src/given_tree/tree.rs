use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;

use super::{PlanError, Result};
use crate::belief::{make_index_chain, IndexChain, SimplificationSchedule, WeightedParticleBelief};
use crate::models::{pf_update, sample_observation, Action, ModelError};
use crate::problem::Problem;
use crate::reward::terminal_reward;
use crate::rng::{stream, Purpose};
use crate::scalar::Scalar;

/// Rejected observation draws tolerated per branch before giving up.
const MAX_REDRAWS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOptions {
    pub horizon: usize,
    /// Observation branching for children of nodes at each depth.
    pub n_z: Vec<usize>,
    /// Absolute time step of the root (selects time-varying actions).
    pub base_step: usize,
    pub seed: u64,
}

impl TreeOptions {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(PlanError::InvalidOptions("horizon must be positive".into()));
        }
        if self.n_z.len() != self.horizon || self.n_z.contains(&0) {
            return Err(PlanError::InvalidOptions(format!(
                "need {} positive branching factors, got {:?}",
                self.horizon, self.n_z
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode<T> {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Index of the incoming action in the parent's action list.
    pub action_index: Option<usize>,
    pub action: Option<Action<T>>,
    pub observation: Vec<T>,
    pub belief: WeightedParticleBelief<T>,
    pub chain: IndexChain,
    /// `children[j]` holds the observation children under action `j`.
    pub children: Vec<Vec<usize>>,
    pub actions: Vec<Action<T>>,
}

impl<T> TreeNode<T> {
    pub fn is_leaf(&self) -> bool {
        self.children.iter().all(|c| c.is_empty()) && self.actions.is_empty()
    }
}

/// Belief tree in an arena; node ids grow breadth first so children always follow their parent.
#[derive(Debug, Clone)]
pub struct BeliefTree<T> {
    nodes: Vec<TreeNode<T>>,
    schedule: SimplificationSchedule,
    horizon: usize,
}

/// Number of nodes in a full tree with `actions` actions per node.
pub fn node_count(actions: usize, n_z: &[usize]) -> usize {
    let mut total = 1;
    let mut layer = 1;
    for &k in n_z {
        layer *= actions * k;
        total += layer;
    }
    total
}

impl<T: Scalar> BeliefTree<T> {
    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode<T> {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn schedule(&self) -> &SimplificationSchedule {
        &self.schedule
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    /// Value of a terminal action taken at `node`.
    pub fn terminal_value(&self, problem: &Problem<T>, node: usize) -> T {
        match &problem.reward.terminal {
            Some(t) => terminal_reward(&self.nodes[node].belief, t),
            None => T::zero(),
        }
    }

    /// Writes one JSON object per node; `levels[id]` gives the final reward level if known.
    pub fn write_json_lines<W: Write>(&self, out: &mut W, levels: Option<&[usize]>) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: usize,
            parent: Option<usize>,
            depth: usize,
            action: Option<&'a str>,
            observation: Vec<f64>,
            level: Option<usize>,
        }
        for n in &self.nodes {
            let row = Row {
                id: n.id,
                parent: n.parent,
                depth: n.depth,
                action: n.action.as_ref().map(|a| a.name.as_str()),
                observation: n.observation.iter().map(|v| v.to_f64().unwrap()).collect(),
                level: levels.and_then(|l| l.get(n.id).copied()).filter(|_| n.parent.is_some()),
            };
            serde_json::to_writer(&mut *out, &row).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Grows a sparse-sampling tree: every action at every inner node, `n_z[d]` sampled observations
/// below depth `d`. Draws whose observation has zero likelihood under every particle are redrawn.
pub fn build_sparse_sampling_tree<T: Scalar>(
    root_belief: WeightedParticleBelief<T>,
    problem: &Problem<T>,
    schedule: &SimplificationSchedule,
    opts: &TreeOptions,
) -> Result<BeliefTree<T>> {
    opts.validate()?;
    if schedule.n_x() != root_belief.len() {
        return Err(PlanError::InvalidOptions(format!(
            "schedule is for {} particles, belief has {}",
            schedule.n_x(),
            root_belief.len()
        )));
    }
    let chain = |id: usize| -> Result<IndexChain> {
        let mut rng = stream(opts.seed, Purpose::IndexChain, id as u64, 0);
        Ok(make_index_chain(schedule.n_x(), schedule, &mut rng)?)
    };
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        action_index: None,
        action: None,
        observation: Vec::new(),
        belief: root_belief,
        chain: chain(0)?,
        children: Vec::new(),
        actions: Vec::new(),
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let depth = nodes[id].depth;
        if depth == opts.horizon {
            continue;
        }
        let actions = problem.actions.at(opts.base_step + depth);
        let mut children = vec![Vec::new(); actions.len()];
        for (j, action) in actions.iter().enumerate() {
            if action.terminal {
                continue;
            }
            for _ in 0..opts.n_z[depth] {
                let child = nodes.len();
                let mut rng = stream(opts.seed, Purpose::TreeConstruction, child as u64, 0);
                let mut tries = 0;
                let (z, post) = loop {
                    let parent = &nodes[id].belief;
                    let (_, z) = sample_observation(
                        parent,
                        action,
                        problem.transition.as_ref(),
                        problem.observation.as_ref(),
                        &mut rng,
                    );
                    match pf_update(parent, action, &z, problem.transition.as_ref(), problem.observation.as_ref(), &mut rng) {
                        Ok(post) => break (z, post),
                        Err(ModelError::ZeroLikelihoodObservation) => {
                            tries += 1;
                            if tries >= MAX_REDRAWS {
                                return Err(PlanError::TooManyRedraws(tries));
                            }
                        }
                        Err(e) => return Err(e.into()),
                    }
                };
                nodes.push(TreeNode {
                    id: child,
                    parent: Some(id),
                    depth: depth + 1,
                    action_index: Some(j),
                    action: Some(action.clone()),
                    observation: z,
                    belief: post,
                    chain: chain(child)?,
                    children: Vec::new(),
                    actions: Vec::new(),
                });
                children[j].push(child);
                queue.push_back(child);
            }
        }
        nodes[id].children = children;
        nodes[id].actions = actions;
    }
    Ok(BeliefTree { nodes, schedule: schedule.clone(), horizon: opts.horizon })
}
