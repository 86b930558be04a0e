use super::{
    edge_reward, promote_edge, q_from_children, BeliefTree, GivenTreeSolution, InitialRewardLevel, PlanError,
    QBoundsEntry, Result, SolveStats,
};
use crate::problem::Problem;
use crate::reward::RewardInterval;
use crate::scalar::Scalar;

/// Marks every unpruned action whose upper bound lies strictly below the best lower bound.
/// Returns the number of actions pruned by this call.
pub fn prune<T: Scalar>(entries: &mut [QBoundsEntry<T>]) -> usize {
    let best = entries.iter().filter(|e| !e.pruned).map(|e| e.lower).fold(T::neg_infinity(), T::max);
    let mut count = 0;
    for e in entries.iter_mut().filter(|e| !e.pruned) {
        if best > e.upper {
            e.pruned = true;
            count += 1;
        }
    }
    count
}

/// Simplification-level driven solver that removes overlap between action bounds at every node.
pub struct SithBsp<'a, T: Scalar> {
    tree: &'a BeliefTree<T>,
    problem: &'a Problem<T>,
    init: InitialRewardLevel,
    rewards: Vec<Option<RewardInterval<T>>>,
    q: Vec<Vec<QBoundsEntry<T>>>,
    value: Vec<(T, T)>,
    value_level: Vec<usize>,
    survivor: Vec<Option<usize>>,
    stats: SolveStats,
}

impl<'a, T: Scalar> SithBsp<'a, T> {
    pub fn new(tree: &'a BeliefTree<T>, problem: &'a Problem<T>, init: InitialRewardLevel) -> Result<Self> {
        let n_max = tree.schedule().n_max();
        if let InitialRewardLevel::Fixed(l) = init {
            if l == 0 || l > n_max {
                return Err(PlanError::InvalidOptions(format!("initial level {l} outside 1..={n_max}")));
            }
        }
        let n = tree.len();
        Ok(Self {
            tree,
            problem,
            init,
            rewards: vec![None; n],
            q: vec![Vec::new(); n],
            value: vec![(T::zero(), T::zero()); n],
            value_level: vec![n_max; n],
            survivor: vec![None; n],
            stats: SolveStats::default(),
        })
    }

    /// Solves the whole tree and returns the root decision.
    pub fn solve(&mut self) -> Result<GivenTreeSolution<T>> {
        self.solve_node(0)?;
        let best_action = self.survivor[0].expect("root has actions");
        let node_levels = (1..self.tree.len())
            .map(|id| (self.tree.node(id).depth, self.rewards[id].as_ref().map_or(0, |r| r.particles())))
            .collect();
        Ok(GivenTreeSolution { best_action, root_q: self.q[0].clone(), stats: self.stats, node_levels })
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

    /// Surviving action at a solved inner node.
    pub fn survivor(&self, id: usize) -> Option<usize> {
        self.survivor[id]
    }

    pub fn stats(&self) -> SolveStats {
        self.stats
    }

    fn n_max(&self) -> usize {
        self.tree.schedule().n_max()
    }

    fn entry(&self, id: usize, j: usize, pruned: bool) -> QBoundsEntry<T> {
        let node = self.tree.node(id);
        if node.actions[j].terminal {
            let v = self.tree.terminal_value(self.problem, id);
            return QBoundsEntry { action: j, lower: v, upper: v, level: self.n_max(), pruned };
        }
        let children = &node.children[j];
        let reward = |c: usize| {
            let r = self.rewards[c].as_ref().expect("reward evaluated");
            (r.lower(), r.upper())
        };
        let (lower, upper) = q_from_children(children, reward, |c| self.value[c], self.problem.gamma());
        let level = children
            .iter()
            .map(|&c| self.rewards[c].as_ref().unwrap().level().min(self.value_level[c]))
            .min()
            .unwrap_or(self.n_max());
        QBoundsEntry { action: j, lower, upper, level, pruned }
    }

    fn initial_level(&self, child: usize) -> usize {
        match self.init {
            InitialRewardLevel::Coarsest => 1,
            InitialRewardLevel::ChildValueLevel => self.value_level[child],
            InitialRewardLevel::Fixed(l) => l,
        }
    }

    fn solve_node(&mut self, id: usize) -> Result<()> {
        let tree = self.tree;
        let node = tree.node(id);
        if node.actions.is_empty() {
            self.value[id] = (T::zero(), T::zero());
            self.value_level[id] = self.n_max();
            return Ok(());
        }
        let mut entries = Vec::with_capacity(node.actions.len());
        for j in 0..node.actions.len() {
            for &c in &node.children[j] {
                self.solve_node(c)?;
                let level = self.initial_level(c);
                self.rewards[c] = Some(edge_reward(tree, self.problem, c, Some(level), &mut self.stats.calls)?);
            }
            entries.push(self.entry(id, j, false));
        }
        prune(&mut entries);
        self.q[id] = entries;
        loop {
            let open: Vec<usize> = (0..self.q[id].len()).filter(|&j| !self.q[id][j].pruned).collect();
            if open.len() <= 1 {
                break;
            }
            let s_min = open.iter().map(|&j| self.q[id][j].level).min().unwrap();
            if s_min >= self.n_max() {
                break;
            }
            let j = *open.iter().find(|&&j| self.q[id][j].level == s_min).unwrap();
            self.resimplify_tree(id, j, s_min)?;
            assert!(self.q[id][j].level > s_min, "resimplification must raise the level of the branch");
            prune(&mut self.q[id]);
        }
        let mut best: Option<usize> = None;
        for (j, e) in self.q[id].iter().enumerate().filter(|(_, e)| !e.pruned) {
            if best.is_none_or(|b| e.lower > self.q[id][b].lower) {
                best = Some(j);
            }
        }
        let b = best.expect("at least one action survives pruning");
        self.survivor[id] = Some(b);
        self.refresh_value(id);
        Ok(())
    }

    fn refresh_value(&mut self, id: usize) {
        let b = self.survivor[id].unwrap();
        let e = self.q[id][b];
        self.value[id] = (e.lower, e.upper);
        self.value_level[id] = e.level;
    }

    /// Promotes every reward under action `j` of `id` and recurses into children whose value is
    /// not finer than `s_min`.
    fn resimplify_tree(&mut self, id: usize, j: usize, s_min: usize) -> Result<()> {
        self.stats.resimplifications += 1;
        let tree = self.tree;
        for &c in &tree.node(id).children[j] {
            self.resimplify_reward(c)?;
            if !tree.node(c).actions.is_empty() && self.value_level[c] <= s_min {
                self.resimplify_subtree(c, s_min)?;
            }
        }
        let pruned = self.q[id][j].pruned;
        self.q[id][j] = self.entry(id, j, pruned);
        Ok(())
    }

    fn resimplify_reward(&mut self, c: usize) -> Result<()> {
        self.stats.resimplifications += 1;
        let mut r = self.rewards[c].take().expect("reward evaluated");
        let promoted = promote_edge(self.tree, self.problem, c, &mut r, &mut self.stats.calls);
        self.rewards[c] = Some(r);
        if promoted? {
            self.stats.promotions += 1;
        }
        Ok(())
    }

    fn resimplify_subtree(&mut self, c: usize, s_min: usize) -> Result<()> {
        self.stats.resimplifications += 1;
        let b = self.survivor[c].expect("child solved");
        self.resimplify_tree(c, b, s_min)?;
        self.refresh_value(c);
        Ok(())
    }
}

/// Solves a given tree with SITH-BSP.
pub fn sith_bsp_solve<T: Scalar>(
    tree: &BeliefTree<T>,
    problem: &Problem<T>,
    init: InitialRewardLevel,
) -> Result<GivenTreeSolution<T>> {
    SithBsp::new(tree, problem, init)?.solve()
}
