//! Plain PFT-DPW with exact rewards.

use super::{
    expand_child, next_action, obs_bits, pick_child, rollout_trajectory, terminal_value, MctsError, MctsOptions,
    MctsResult, MctsStats, Result, RootAction, TraceStep, TreeSignature,
};
use crate::belief::WeightedParticleBelief;
use crate::models::{Action, ModelError};
use crate::problem::Problem;
use crate::reward::composite_reward;
use crate::scalar::{lit, Scalar};

struct Node<T> {
    parent: Option<usize>,
    depth: usize,
    belief: WeightedParticleBelief<T>,
    observation: Vec<T>,
    visits: u64,
    actions: Vec<usize>,
    available: Vec<Action<T>>,
}

struct ActionNode<T> {
    node: usize,
    index: usize,
    action: Action<T>,
    visits: u64,
    q: T,
    draws: u64,
    children: Vec<(usize, u64, T)>,
}

struct Pft<'a, T: Scalar> {
    problem: &'a Problem<T>,
    opts: &'a MctsOptions,
    nodes: Vec<Node<T>>,
    ha: Vec<ActionNode<T>>,
    stats: MctsStats,
    trace: Vec<TraceStep>,
}

impl<T: Scalar> Pft<'_, T> {
    fn select(&mut self, h: usize, c: T, widen: bool) -> Option<usize> {
        if widen && self.opts.dpw.widen_actions(self.nodes[h].actions.len(), self.nodes[h].visits) {
            let used: Vec<usize> = self.nodes[h].actions.iter().map(|&a| self.ha[a].index).collect();
            if let Some(j) = next_action(&self.nodes[h].available, &used, self.opts.seed, h) {
                let id = self.ha.len();
                self.ha.push(ActionNode {
                    node: h,
                    index: j,
                    action: self.nodes[h].available[j].clone(),
                    visits: 0,
                    q: T::zero(),
                    draws: 0,
                    children: Vec::new(),
                });
                self.nodes[h].actions.push(id);
            }
        }
        let acts = &self.nodes[h].actions;
        if widen {
            if let Some(&a) = acts.iter().find(|&&a| self.ha[a].visits == 0) {
                return Some(a);
            }
        }
        let n_h = T::from_u64(self.nodes[h].visits).unwrap();
        let mut best: Option<(usize, T)> = None;
        for &a in acts.iter().filter(|&&a| self.ha[a].visits > 0) {
            let bonus = if c == T::zero() {
                T::zero()
            } else {
                c * (n_h.ln() / T::from_u64(self.ha[a].visits).unwrap()).sqrt()
            };
            let u = self.ha[a].q + bonus;
            if best.is_none_or(|(_, b)| u > b) {
                best = Some((a, u));
            }
        }
        best.map(|(a, _)| a)
    }

    fn rollout(&mut self, node: usize, steps: usize) -> Result<T> {
        let gamma = self.problem.gamma();
        let step = self.opts.base_step + self.nodes[node].depth;
        let (links, truncated) =
            rollout_trajectory(self.problem, &self.nodes[node].belief, step, steps, self.opts.seed, node);
        if truncated {
            self.stats.zero_likelihood += 1;
        }
        let mut total = T::zero();
        let mut discount = T::one();
        for (t, link) in links.iter().enumerate() {
            let prev = if t == 0 { &self.nodes[node].belief } else { links[t - 1].post.as_ref().unwrap() };
            let r = match &link.post {
                None => terminal_value(self.problem, prev),
                Some(post) => {
                    let input = self.problem.input(prev, &link.action, &link.observation, post);
                    composite_reward(&input, &self.problem.reward, &mut self.stats.calls)?
                }
            };
            total = total + discount * r;
            discount = discount * gamma;
        }
        Ok(total)
    }

    /// Returns `None` when the visit was abandoned on a zero-likelihood observation.
    fn simulate(&mut self, h: usize, d: usize) -> Result<Option<T>> {
        if d == 0 {
            return Ok(Some(T::zero()));
        }
        let c = lit::<T>(self.opts.dpw.c);
        let a = self.select(h, c, true).expect("widening adds an action to an empty node");
        let gamma = self.problem.gamma();
        let record = self.opts.record_trace;
        let ret = if self.ha[a].action.terminal {
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: None, expanded: false });
            }
            terminal_value(self.problem, &self.nodes[h].belief)
        } else if self.opts.dpw.widen_observations(self.ha[a].children.len(), self.ha[a].visits) {
            let draw = self.ha[a].draws;
            self.ha[a].draws += 1;
            let (z, post) = match expand_child(self.problem, &self.nodes[h].belief, &self.ha[a].action, self.opts.seed, a, draw) {
                Ok(v) => v,
                Err(ModelError::ZeroLikelihoodObservation) => {
                    self.stats.zero_likelihood += 1;
                    return Ok(None);
                }
                Err(e) => return Err(e.into()),
            };
            let child = self.nodes.len();
            let available = self.problem.actions.at(self.opts.base_step + self.nodes[h].depth + 1);
            let input = self.problem.input(&self.nodes[h].belief, &self.ha[a].action, &z, &post);
            let r = composite_reward(&input, &self.problem.reward, &mut self.stats.calls)?;
            self.nodes.push(Node {
                parent: Some(a),
                depth: self.nodes[h].depth + 1,
                belief: post,
                observation: z,
                visits: 0,
                actions: Vec::new(),
                available,
            });
            self.ha[a].children.push((child, 0, r));
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: Some(child), expanded: true });
            }
            let k = self.ha[a].children.len() - 1;
            self.ha[a].children[k].1 += 1;
            r + gamma * self.rollout(child, d - 1)?
        } else {
            let k = pick_child(self.opts.seed, a, self.ha[a].visits, self.ha[a].children.len());
            let (child, _, r) = self.ha[a].children[k];
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: Some(child), expanded: false });
            }
            self.ha[a].children[k].1 += 1;
            match self.simulate(child, d - 1)? {
                Some(v) => r + gamma * v,
                None => r,
            }
        };
        self.nodes[h].visits += 1;
        self.ha[a].visits += 1;
        let n = T::from_u64(self.ha[a].visits).unwrap();
        self.ha[a].q = self.ha[a].q + (ret - self.ha[a].q) / n;
        Ok(Some(ret))
    }
}

/// PFT-DPW with UCB exploration and exact rewards; returns the root action with the best Q̂.
pub fn pft_dpw_plan<T: Scalar>(
    root_belief: WeightedParticleBelief<T>,
    problem: &Problem<T>,
    opts: &MctsOptions,
) -> Result<MctsResult<T>> {
    opts.dpw.validate().map_err(MctsError::InvalidConfig)?;
    let available = problem.actions.at(opts.base_step);
    let mut p = Pft {
        problem,
        opts,
        nodes: vec![Node {
            parent: None,
            depth: 0,
            belief: root_belief,
            observation: Vec::new(),
            visits: 0,
            actions: Vec::new(),
            available,
        }],
        ha: Vec::new(),
        stats: MctsStats::default(),
        trace: Vec::new(),
    };
    let mut trace = Vec::new();
    for _ in 0..opts.dpw.iterations {
        p.simulate(0, opts.dpw.depth)?;
        p.stats.simulations += 1;
        if opts.record_trace {
            trace.push(std::mem::take(&mut p.trace));
        }
    }
    let best = p.select(0, T::zero(), false).ok_or(MctsError::NoVisitedAction)?;
    let root = p.nodes[0]
        .actions
        .iter()
        .map(|&a| RootAction { action_index: p.ha[a].index, visits: p.ha[a].visits, q_lower: p.ha[a].q, q_upper: p.ha[a].q })
        .collect();
    let tree = TreeSignature {
        nodes: p.nodes.iter().map(|n| (n.parent, n.visits, obs_bits(&n.observation))).collect(),
        actions: p
            .ha
            .iter()
            .map(|a| (a.node, a.action.id, a.visits, a.children.iter().map(|&(c, n, _)| (c, n)).collect()))
            .collect(),
    };
    Ok(MctsResult { best_action: p.ha[best].index, root, stats: p.stats, tree, trace, levels: Vec::new() })
}
