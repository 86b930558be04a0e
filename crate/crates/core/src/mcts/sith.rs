//! SITH-PFT: PFT-DPW over reward bounds, with overlap resolution before every action choice.

use super::{
    expand_child, next_action, obs_bits, pick_child, rollout_trajectory, terminal_value, ucb_bounds, MctsError,
    MctsOptions, MctsResult, MctsStats, Result, RewardLevelRecord, RolloutLink, RootAction, TraceStep, TreeSignature,
};
use crate::belief::{make_index_chain, IndexChain, SimplificationSchedule, WeightedParticleBelief};
use crate::models::{Action, ModelError};
use crate::problem::Problem;
use crate::reward::{composite_reward_bounds, RewardInterval};
use crate::rng::{stream, Purpose};
use crate::scalar::{lit, Scalar};

struct RolloutReward<T> {
    link: RolloutLink<T>,
    chain: Option<IndexChain>,
    reward: RewardInterval<T>,
}

struct Node<T> {
    parent: Option<usize>,
    depth: usize,
    belief: WeightedParticleBelief<T>,
    observation: Vec<T>,
    visits: u64,
    actions: Vec<usize>,
    available: Vec<Action<T>>,
    /// Reward of the edge into this node.
    reward: Option<RewardInterval<T>>,
    chain: Option<IndexChain>,
    rollout: Vec<RolloutReward<T>>,
}

struct ActionNode<T> {
    node: usize,
    index: usize,
    action: Action<T>,
    visits: u64,
    q_lower: T,
    q_upper: T,
    draws: u64,
    /// `(child node, edge visits)`.
    children: Vec<(usize, u64)>,
}

impl<T: Scalar> ActionNode<T> {
    fn gap(&self) -> T {
        self.q_upper - self.q_lower
    }
}

/// Where the progress guard found the weakest reward.
enum Weakest {
    Node(usize),
    Rollout(usize, usize),
}

/// Resimplification context: the triggering gap `G`, the depth `d` of its action node and that
/// node's tree depth.
#[derive(Clone, Copy)]
struct Context<T> {
    gap: T,
    d: usize,
    base: usize,
}

/// SITH-PFT planner state. Use [`sith_pft_plan`] for one-shot planning.
pub struct SithPft<'a, T: Scalar> {
    problem: &'a Problem<T>,
    schedule: &'a SimplificationSchedule,
    opts: &'a MctsOptions,
    nodes: Vec<Node<T>>,
    ha: Vec<ActionNode<T>>,
    stats: MctsStats,
    trace: Vec<TraceStep>,
}

impl<'a, T: Scalar> SithPft<'a, T> {
    pub fn new(
        root_belief: WeightedParticleBelief<T>,
        problem: &'a Problem<T>,
        schedule: &'a SimplificationSchedule,
        opts: &'a MctsOptions,
    ) -> Result<Self> {
        opts.dpw.validate().map_err(MctsError::InvalidConfig)?;
        if schedule.n_x() != root_belief.len() {
            return Err(MctsError::InvalidConfig(format!(
                "schedule is for {} particles, belief has {}",
                schedule.n_x(),
                root_belief.len()
            )));
        }
        let available = problem.actions.at(opts.base_step);
        Ok(Self {
            problem,
            schedule,
            opts,
            nodes: vec![Node {
                parent: None,
                depth: 0,
                belief: root_belief,
                observation: Vec::new(),
                visits: 0,
                actions: Vec::new(),
                available,
                reward: None,
                chain: None,
                rollout: Vec::new(),
            }],
            ha: Vec::new(),
            stats: MctsStats::default(),
            trace: Vec::new(),
        })
    }

    pub fn stats(&self) -> MctsStats {
        self.stats
    }

    /// Runs one simulation from the root.
    pub fn simulate_once(&mut self) -> Result<Vec<TraceStep>> {
        self.simulate(0, self.opts.dpw.depth)?;
        self.stats.simulations += 1;
        Ok(std::mem::take(&mut self.trace))
    }

    /// Resolves overlap at the root with `c = 0` and returns the chosen action node's action index.
    pub fn best_action(&mut self) -> Result<usize> {
        let (a, _) = self.select(0, T::zero(), false)?;
        a.map(|a| self.ha[a].index).ok_or(MctsError::NoVisitedAction)
    }

    /// Checks the running-mean Q bounds against a fresh reconstruction from the stored intervals.
    /// Returns the largest absolute deviation over all visited action nodes.
    pub fn reconstruction_error(&self) -> T {
        let mut worst = T::zero();
        for a in 0..self.ha.len() {
            if self.ha[a].visits == 0 || self.ha[a].action.terminal {
                continue;
            }
            let (lo, hi) = self.reconstructed(a);
            worst = worst.max((lo - self.ha[a].q_lower).abs()).max((hi - self.ha[a].q_upper).abs());
        }
        worst
    }

    pub fn root_actions(&self) -> Vec<RootAction<T>> {
        self.nodes[0]
            .actions
            .iter()
            .map(|&a| RootAction {
                action_index: self.ha[a].index,
                visits: self.ha[a].visits,
                q_lower: self.ha[a].q_lower,
                q_upper: self.ha[a].q_upper,
            })
            .collect()
    }

    pub fn signature(&self) -> TreeSignature {
        TreeSignature {
            nodes: self.nodes.iter().map(|n| (n.parent, n.visits, obs_bits(&n.observation))).collect(),
            actions: self.ha.iter().map(|a| (a.node, a.action.id, a.visits, a.children.clone())).collect(),
        }
    }

    pub fn levels(&self) -> Vec<RewardLevelRecord> {
        (1..self.nodes.len())
            .map(|id| {
                let mut up = id;
                let root_action = loop {
                    let a = self.nodes[up].parent.unwrap();
                    if self.ha[a].node == 0 {
                        break self.ha[a].index;
                    }
                    up = self.ha[a].node;
                };
                let n = &self.nodes[id];
                RewardLevelRecord {
                    node: id,
                    depth: n.depth,
                    root_action,
                    level: n.reward.as_ref().unwrap().level(),
                    rollout_levels: n.rollout.iter().map(|r| r.reward.level()).collect(),
                }
            })
            .collect()
    }

    fn chain(&self, node: usize, slot: usize) -> Result<IndexChain> {
        let mut rng = stream(self.opts.seed, Purpose::IndexChain, node as u64, slot as u64);
        Ok(make_index_chain(self.schedule.n_x(), self.schedule, &mut rng)?)
    }

    fn n_max(&self) -> usize {
        self.schedule.n_max()
    }

    fn add_action(&mut self, h: usize) {
        let used: Vec<usize> = self.nodes[h].actions.iter().map(|&a| self.ha[a].index).collect();
        if let Some(j) = next_action(&self.nodes[h].available, &used, self.opts.seed, h) {
            let id = self.ha.len();
            self.ha.push(ActionNode {
                node: h,
                index: j,
                action: self.nodes[h].available[j].clone(),
                visits: 0,
                q_lower: T::zero(),
                q_upper: T::zero(),
                draws: 0,
                children: Vec::new(),
            });
            self.nodes[h].actions.push(id);
        }
    }

    /// Action selection with bound overlap resolution. The flag reports whether any
    /// resimplification happened.
    fn select(&mut self, h: usize, c: T, widen: bool) -> Result<(Option<usize>, bool)> {
        if widen && self.opts.dpw.widen_actions(self.nodes[h].actions.len(), self.nodes[h].visits) {
            self.add_action(h);
        }
        if widen {
            if let Some(&a) = self.nodes[h].actions.iter().find(|&&a| self.ha[a].visits == 0) {
                return Ok((Some(a), false));
            }
        }
        let cands: Vec<usize> = self.nodes[h].actions.iter().copied().filter(|&a| self.ha[a].visits > 0).collect();
        if cands.len() <= 1 {
            return Ok((cands.first().copied(), false));
        }
        let mut touched = false;
        loop {
            let n_h = self.nodes[h].visits;
            let bounds: Vec<(T, T)> = cands
                .iter()
                .map(|&a| {
                    let e = &self.ha[a];
                    if c == T::zero() {
                        (e.q_lower, e.q_upper)
                    } else {
                        ucb_bounds(e.q_lower, e.q_upper, n_h, e.visits, c)
                    }
                })
                .collect();
            let mut t = 0;
            for k in 1..cands.len() {
                if bounds[k].0 > bounds[t].0 {
                    t = k;
                }
            }
            let mut settled = true;
            let mut chosen = cands[t];
            let mut gap = T::zero();
            for k in 0..cands.len() {
                if k != t && bounds[t].0 < bounds[k].1 {
                    settled = false;
                    let g = self.ha[cands[k]].gap();
                    if g > gap {
                        gap = g;
                        chosen = cands[k];
                    }
                }
            }
            if settled {
                return Ok((Some(cands[t]), touched));
            }
            touched = true;
            let g = self.ha[chosen].gap();
            self.resimplify_action(chosen, g)?;
        }
    }

    fn context(&self, a: usize, gap: T) -> Context<T> {
        let base = self.nodes[self.ha[a].node].depth;
        Context { gap, d: self.opts.dpw.depth - base, base }
    }

    fn resimplify_action(&mut self, a: usize, gap: T) -> Result<()> {
        self.stats.resimplifications += 1;
        let ctx = self.context(a, gap);
        let before = self.stats.promotions;
        let children: Vec<usize> = self.ha[a].children.iter().map(|&(c, _)| c).collect();
        for &c in &children {
            self.resimplify_node(c, ctx, false)?;
        }
        self.reconstruct(a);
        if self.stats.promotions == before {
            self.stats.guard_passes += 1;
            for &c in &children {
                self.resimplify_node(c, ctx, true)?;
            }
            self.reconstruct(a);
        }
        if self.stats.promotions == before {
            if let Some((_, w)) = self.weakest_under(a, ctx) {
                self.promote(w)?;
            }
            self.reconstruct_subtree(a);
        }
        Ok(())
    }

    /// Descends along the visit-weighted largest gap (or every action when `full`), refining
    /// rewards that carry at least their share of the triggering gap.
    fn resimplify_node(&mut self, b: usize, ctx: Context<T>, full: bool) -> Result<()> {
        self.stats.resimplifications += 1;
        if !self.nodes[b].actions.is_empty() {
            let picked: Vec<usize> = if full {
                self.nodes[b].actions.clone()
            } else {
                let mut best = self.nodes[b].actions[0];
                let mut score = T::neg_infinity();
                for &a in &self.nodes[b].actions {
                    let s = T::from_u64(self.ha[a].visits).unwrap() * self.ha[a].gap();
                    if s > score {
                        score = s;
                        best = a;
                    }
                }
                vec![best]
            };
            for a in picked {
                let children: Vec<usize> = self.ha[a].children.iter().map(|&(c, _)| c).collect();
                for c in children {
                    self.resimplify_node(c, ctx, full)?;
                }
                self.reconstruct(a);
            }
        }
        self.refine(b, ctx)?;
        self.refine_rollout(b, ctx)
    }

    fn exponent(&self, b: usize, ctx: Context<T>) -> usize {
        self.nodes[b].depth - ctx.base - 1
    }

    fn passes(&self, e: usize, gap: T, ctx: Context<T>) -> bool {
        let gamma = self.problem.gamma();
        gamma.powi(e as i32) * gap >= ctx.gap / T::from_usize(ctx.d).unwrap()
    }

    fn refine(&mut self, b: usize, ctx: Context<T>) -> Result<()> {
        let r = self.nodes[b].reward.as_ref().unwrap();
        if r.can_promote() && self.passes(self.exponent(b, ctx), r.gap(), ctx) {
            self.promote(Weakest::Node(b))?;
        }
        Ok(())
    }

    fn refine_rollout(&mut self, b: usize, ctx: Context<T>) -> Result<()> {
        let gamma = self.problem.gamma();
        let e0 = self.exponent(b, ctx) + 1;
        let mut best: Option<(usize, T)> = None;
        for (t, r) in self.nodes[b].rollout.iter().enumerate() {
            let e = e0 + t;
            if r.reward.can_promote() && self.passes(e, r.reward.gap(), ctx) {
                let s = gamma.powi(e as i32) * r.reward.gap();
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((t, s));
                }
            }
        }
        if let Some((t, _)) = best {
            self.promote(Weakest::Rollout(b, t))?;
        }
        Ok(())
    }

    /// The promotable reward with the largest discounted gap anywhere under action node `a`.
    fn weakest_under(&self, a: usize, ctx: Context<T>) -> Option<(T, Weakest)> {
        let gamma = self.problem.gamma();
        let mut best: Option<(T, Weakest)> = None;
        let consider = |s: T, w: Weakest, best: &mut Option<(T, Weakest)>| {
            if s > T::zero() && best.as_ref().is_none_or(|(bs, _)| s > *bs) {
                *best = Some((s, w));
            }
        };
        let mut stack: Vec<usize> = self.ha[a].children.iter().map(|&(c, _)| c).collect();
        while let Some(b) = stack.pop() {
            let e = self.exponent(b, ctx);
            let n = &self.nodes[b];
            let r = n.reward.as_ref().unwrap();
            if r.can_promote() {
                consider(gamma.powi(e as i32) * r.gap(), Weakest::Node(b), &mut best);
            }
            for (t, rr) in n.rollout.iter().enumerate() {
                if rr.reward.can_promote() {
                    consider(gamma.powi((e + 1 + t) as i32) * rr.reward.gap(), Weakest::Rollout(b, t), &mut best);
                }
            }
            for &a2 in &n.actions {
                stack.extend(self.ha[a2].children.iter().map(|&(c, _)| c));
            }
        }
        best
    }

    fn promote(&mut self, w: Weakest) -> Result<()> {
        let problem = self.problem;
        let promoted = match w {
            Weakest::Node(b) => {
                let a = self.nodes[b].parent.unwrap();
                let parent = self.ha[a].node;
                let mut r = self.nodes[b].reward.take().unwrap();
                let res = {
                    let n = &self.nodes[b];
                    let input = problem.input(&self.nodes[parent].belief, &self.ha[a].action, &n.observation, &n.belief);
                    let next = n.chain.as_ref().unwrap().level(r.level() + 1)?;
                    r.promote(&input, &next, &next, &mut self.stats.calls)
                };
                self.nodes[b].reward = Some(r);
                res?
            }
            Weakest::Rollout(b, t) => {
                let Node { belief, rollout, .. } = &mut self.nodes[b];
                let (head, tail) = rollout.split_at_mut(t);
                let prev = head.last().and_then(|p| p.link.post.as_ref()).unwrap_or(belief);
                let step = &mut tail[0];
                let post = step.link.post.as_ref().expect("terminal rollout rewards are exact");
                let input = problem.input(prev, &step.link.action, &step.link.observation, post);
                let next = step.chain.as_ref().unwrap().level(step.reward.level() + 1)?;
                step.reward.promote(&input, &next, &next, &mut self.stats.calls)?
            }
        };
        if promoted {
            self.stats.promotions += 1;
        }
        Ok(())
    }

    fn rollout_value(&self, b: usize) -> (T, T) {
        let gamma = self.problem.gamma();
        let mut lo = T::zero();
        let mut hi = T::zero();
        let mut discount = T::one();
        for r in &self.nodes[b].rollout {
            lo = lo + discount * r.reward.lower();
            hi = hi + discount * r.reward.upper();
            discount = discount * gamma;
        }
        (lo, hi)
    }

    /// Q bounds of `a` recomputed from stored intervals and visit counts.
    fn reconstructed(&self, a: usize) -> (T, T) {
        let gamma = self.problem.gamma();
        let mut lo = T::zero();
        let mut hi = T::zero();
        for &(c, n_o) in &self.ha[a].children {
            let n_o = T::from_u64(n_o).unwrap();
            let r = self.nodes[c].reward.as_ref().unwrap();
            let (rl, rh) = self.rollout_value(c);
            let mut sl = rl;
            let mut sh = rh;
            for &a2 in &self.nodes[c].actions {
                let n2 = T::from_u64(self.ha[a2].visits).unwrap();
                sl = sl + n2 * self.ha[a2].q_lower;
                sh = sh + n2 * self.ha[a2].q_upper;
            }
            lo = lo + (n_o * r.lower() + gamma * sl);
            hi = hi + (n_o * r.upper() + gamma * sh);
        }
        let n = T::from_u64(self.ha[a].visits).unwrap();
        (lo / n, hi / n)
    }

    fn reconstruct(&mut self, a: usize) {
        if self.ha[a].visits == 0 || self.ha[a].action.terminal {
            return;
        }
        self.stats.reconstructions += 1;
        let (lo, hi) = self.reconstructed(a);
        self.ha[a].q_lower = lo;
        self.ha[a].q_upper = hi;
    }

    fn reconstruct_subtree(&mut self, a: usize) {
        let children: Vec<usize> = self.ha[a].children.iter().map(|&(c, _)| c).collect();
        for c in children {
            for a2 in self.nodes[c].actions.clone() {
                self.reconstruct_subtree(a2);
            }
        }
        self.reconstruct(a);
    }

    fn rollout(&mut self, node: usize, steps: usize) -> Result<(T, T)> {
        let step = self.opts.base_step + self.nodes[node].depth;
        let (links, truncated) =
            rollout_trajectory(self.problem, &self.nodes[node].belief, step, steps, self.opts.seed, node);
        if truncated {
            self.stats.zero_likelihood += 1;
        }
        let mut rewards = Vec::with_capacity(links.len());
        for (t, link) in links.iter().enumerate() {
            let prev = if t == 0 { &self.nodes[node].belief } else { links[t - 1].post.as_ref().unwrap() };
            let entry = match &link.post {
                None => (None, RewardInterval::exact(terminal_value(self.problem, prev), self.n_max(), prev.len())),
                Some(post) => {
                    let chain = self.chain(node, t + 1)?;
                    let input = self.problem.input(prev, &link.action, &link.observation, post);
                    let set = chain.level(1)?;
                    let r = composite_reward_bounds(&input, &set, &set, &self.problem.reward, self.problem.m, &mut self.stats.calls)?;
                    (Some(chain), r)
                }
            };
            rewards.push(entry);
        }
        self.nodes[node].rollout =
            links.into_iter().zip(rewards).map(|(link, (chain, reward))| RolloutReward { link, chain, reward }).collect();
        Ok(self.rollout_value(node))
    }

    /// One simulation below `h` with `d` steps to go. Returns the lace bounds (`None` if the
    /// visit was abandoned) and whether any resimplification happened at or below `h`.
    fn simulate(&mut self, h: usize, d: usize) -> Result<(Option<(T, T)>, bool)> {
        if d == 0 {
            return Ok((Some((T::zero(), T::zero())), false));
        }
        let c = lit::<T>(self.opts.dpw.c);
        let (a, here) = self.select(h, c, true)?;
        let a = a.expect("widening adds an action to an empty node");
        let gamma = self.problem.gamma();
        let record = self.opts.record_trace;
        let (ret, below) = if self.ha[a].action.terminal {
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: None, expanded: false });
            }
            let v = terminal_value(self.problem, &self.nodes[h].belief);
            ((v, v), false)
        } else if self.opts.dpw.widen_observations(self.ha[a].children.len(), self.ha[a].visits) {
            let draw = self.ha[a].draws;
            self.ha[a].draws += 1;
            let (z, post) = match expand_child(self.problem, &self.nodes[h].belief, &self.ha[a].action, self.opts.seed, a, draw) {
                Ok(v) => v,
                Err(ModelError::ZeroLikelihoodObservation) => {
                    self.stats.zero_likelihood += 1;
                    return Ok((None, here));
                }
                Err(e) => return Err(e.into()),
            };
            let child = self.nodes.len();
            let chain = self.chain(child, 0)?;
            let input = self.problem.input(&self.nodes[h].belief, &self.ha[a].action, &z, &post);
            let set = chain.level(1)?;
            let reward =
                composite_reward_bounds(&input, &set, &set, &self.problem.reward, self.problem.m, &mut self.stats.calls)?;
            let available = self.problem.actions.at(self.opts.base_step + self.nodes[h].depth + 1);
            let (rl, rh) = (reward.lower(), reward.upper());
            self.nodes.push(Node {
                parent: Some(a),
                depth: self.nodes[h].depth + 1,
                belief: post,
                observation: z,
                visits: 0,
                actions: Vec::new(),
                available,
                reward: Some(reward),
                chain: Some(chain),
                rollout: Vec::new(),
            });
            self.ha[a].children.push((child, 1));
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: Some(child), expanded: true });
            }
            let (ul, uh) = self.rollout(child, d - 1)?;
            ((rl + gamma * ul, rh + gamma * uh), false)
        } else {
            let k = pick_child(self.opts.seed, a, self.ha[a].visits, self.ha[a].children.len());
            let child = self.ha[a].children[k].0;
            if record {
                self.trace.push(TraceStep { node: h, action: self.ha[a].action.id, child: Some(child), expanded: false });
            }
            self.ha[a].children[k].1 += 1;
            let (sub, below) = self.simulate(child, d - 1)?;
            let (sl, sh) = sub.unwrap_or((T::zero(), T::zero()));
            let r = self.nodes[child].reward.as_ref().unwrap();
            ((r.lower() + gamma * sl, r.upper() + gamma * sh), below)
        };
        self.nodes[h].visits += 1;
        self.ha[a].visits += 1;
        if below {
            self.reconstruct(a);
        } else {
            let n = T::from_u64(self.ha[a].visits).unwrap();
            let e = &mut self.ha[a];
            e.q_upper = e.q_upper + (ret.1 - e.q_upper) / n;
            e.q_lower = e.q_lower + (ret.0 - e.q_lower) / n;
        }
        Ok((Some(ret), here || below))
    }
}

/// SITH-PFT: `dpw.iterations` simulations, then overlap-free selection at the root with `c = 0`.
pub fn sith_pft_plan<T: Scalar>(
    root_belief: WeightedParticleBelief<T>,
    problem: &Problem<T>,
    schedule: &SimplificationSchedule,
    opts: &MctsOptions,
) -> Result<MctsResult<T>> {
    let mut p = SithPft::new(root_belief, problem, schedule, opts)?;
    let mut trace = Vec::new();
    for _ in 0..opts.dpw.iterations {
        let t = p.simulate_once()?;
        if opts.record_trace {
            trace.push(t);
        }
    }
    let best_action = p.best_action()?;
    Ok(MctsResult {
        best_action,
        root: p.root_actions(),
        stats: p.stats(),
        tree: p.signature(),
        trace,
        levels: p.levels(),
    })
}
