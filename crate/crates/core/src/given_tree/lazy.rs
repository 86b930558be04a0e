use super::{
    edge_reward, promote_edge, q_from_children, sith::prune, BeliefTree, GivenTreeSolution, QBoundsEntry, Result,
    SolveStats,
};
use crate::problem::Problem;
use crate::reward::RewardInterval;
use crate::scalar::{first_argmax, Scalar};

/// Gap-driven solver that only removes overlap at the root.
///
/// Every reward starts at level 1. Each [`step`](LazyBsp::step) descends along the largest gaps,
/// promotes one reward per visited node and refreshes the bounds on the way back up.
pub struct LazyBsp<'a, T: Scalar> {
    tree: &'a BeliefTree<T>,
    problem: &'a Problem<T>,
    rewards: Vec<Option<RewardInterval<T>>>,
    q: Vec<Vec<QBoundsEntry<T>>>,
    value: Vec<(T, T)>,
    stats: SolveStats,
}

impl<'a, T: Scalar> LazyBsp<'a, T> {
    /// Evaluates every reward at level 1 and propagates bounds to the root.
    pub fn new(tree: &'a BeliefTree<T>, problem: &'a Problem<T>) -> Result<Self> {
        let n = tree.len();
        let mut s = Self {
            tree,
            problem,
            rewards: vec![None; n],
            q: vec![Vec::new(); n],
            value: vec![(T::zero(), T::zero()); n],
            stats: SolveStats::default(),
        };
        for id in 1..n {
            s.rewards[id] = Some(edge_reward(tree, problem, id, Some(1), &mut s.stats.calls)?);
        }
        for id in (0..n).rev() {
            let k = tree.node(id).actions.len();
            s.q[id] = (0..k).map(|j| s.entry(id, j)).collect();
            s.refresh_value(id);
        }
        Ok(s)
    }

    pub fn node_q(&self, id: usize) -> &[QBoundsEntry<T>] {
        &self.q[id]
    }

    pub fn value(&self, id: usize) -> (T, T) {
        self.value[id]
    }

    pub fn reward(&self, id: usize) -> Option<&RewardInterval<T>> {
        self.rewards[id].as_ref()
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    /// Current root candidate: the unpruned action with the largest lower bound.
    pub fn candidate(&self) -> usize {
        let open: Vec<&QBoundsEntry<T>> = self.q[0].iter().filter(|e| !e.pruned).collect();
        open[first_argmax(open.iter().map(|e| e.lower)).unwrap()].action
    }

    /// Largest amount by which a competitor's upper bound exceeds the candidate's lower bound.
    pub fn overlap(&self) -> T {
        let best = self.candidate();
        let lo = self.q[0][best].lower;
        self.q[0]
            .iter()
            .filter(|e| !e.pruned && e.action != best)
            .map(|e| e.upper - lo)
            .fold(T::zero(), T::max)
    }

    /// Prunes at the root and runs one descent if overlap remains. Returns `false` once done.
    pub fn step(&mut self) -> Result<bool> {
        prune(&mut self.q[0]);
        if self.overlap() <= T::zero() {
            return Ok(false);
        }
        let allowed: Vec<usize> = self.q[0].iter().filter(|e| !e.pruned).map(|e| e.action).collect();
        self.descend(0, &allowed)?;
        Ok(true)
    }

    pub fn run(&mut self) -> Result<GivenTreeSolution<T>> {
        while self.step()? {}
        let node_levels = (1..self.tree.len())
            .map(|id| (self.tree.node(id).depth, self.rewards[id].as_ref().unwrap().particles()))
            .collect();
        Ok(GivenTreeSolution {
            best_action: self.candidate(),
            root_q: self.q[0].clone(),
            stats: self.stats,
            node_levels,
        })
    }

    fn entry(&self, id: usize, j: usize) -> QBoundsEntry<T> {
        let node = self.tree.node(id);
        let n_max = self.tree.schedule().n_max();
        let pruned = self.q[id].get(j).is_some_and(|e| e.pruned);
        if node.actions[j].terminal {
            let v = self.tree.terminal_value(self.problem, id);
            return QBoundsEntry { action: j, lower: v, upper: v, level: n_max, pruned };
        }
        let children = &node.children[j];
        let reward = |c: usize| {
            let r = self.rewards[c].as_ref().unwrap();
            (r.lower(), r.upper())
        };
        let (lower, upper) = q_from_children(children, reward, |c| self.value[c], self.problem.gamma());
        let level = children.iter().map(|&c| self.rewards[c].as_ref().unwrap().level()).min().unwrap_or(n_max);
        QBoundsEntry { action: j, lower, upper, level, pruned }
    }

    fn refresh_value(&mut self, id: usize) {
        if self.q[id].is_empty() {
            self.value[id] = (T::zero(), T::zero());
            return;
        }
        let lo = self.q[id].iter().map(|e| e.lower).fold(T::neg_infinity(), T::max);
        let hi = self.q[id].iter().map(|e| e.upper).fold(T::neg_infinity(), T::max);
        self.value[id] = (lo, hi);
    }

    fn descend(&mut self, id: usize, allowed: &[usize]) -> Result<()> {
        self.stats.resimplifications += 1;
        let tree = self.tree;
        let gaps = allowed.iter().map(|&j| self.q[id][j].gap());
        let a = allowed[first_argmax(gaps).unwrap()];
        let children = &tree.node(id).children[a];
        if children.is_empty() {
            return Ok(());
        }
        let reward_gap = |s: &Self, c: usize| s.rewards[c].as_ref().unwrap().gap();
        let by_reward = children[first_argmax(children.iter().map(|&c| reward_gap(self, c))).unwrap()];
        let (chosen, recurse) = if tree.node(children[0]).actions.is_empty() {
            (by_reward, false)
        } else {
            let v_gaps: Vec<T> = children.iter().map(|&c| self.value[c].1 - self.value[c].0).collect();
            let k = first_argmax(v_gaps.iter().copied()).unwrap();
            if v_gaps[k] > T::zero() {
                (children[k], true)
            } else {
                (by_reward, false)
            }
        };
        self.stats.resimplifications += 1;
        let mut r = self.rewards[chosen].take().unwrap();
        let promoted = promote_edge(tree, self.problem, chosen, &mut r, &mut self.stats.calls);
        self.rewards[chosen] = Some(r);
        if promoted? {
            self.stats.promotions += 1;
        }
        if recurse {
            let all: Vec<usize> = (0..tree.node(chosen).actions.len()).collect();
            self.descend(chosen, &all)?;
        }
        self.q[id][a] = self.entry(id, a);
        self.refresh_value(id);
        Ok(())
    }
}

/// Solves a given tree with LAZY-BSP.
pub fn lazy_bsp_plan<T: Scalar>(tree: &BeliefTree<T>, problem: &Problem<T>) -> Result<GivenTreeSolution<T>> {
    LazyBsp::new(tree, problem)?.run()
}
