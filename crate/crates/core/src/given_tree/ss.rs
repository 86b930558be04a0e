use super::{edge_reward, q_from_children, BeliefTree, GivenTreeSolution, QBoundsEntry, Result, SolveStats};
use crate::problem::Problem;
use crate::scalar::{first_argmax, Scalar};

/// Exact solution of the tree with every node's Q and V values.
#[derive(Debug, Clone, PartialEq)]
pub struct SsSolution<T> {
    pub solution: GivenTreeSolution<T>,
    /// `q[node][j]`; empty for leaves.
    pub q: Vec<Vec<T>>,
    pub value: Vec<T>,
}

/// Sparse-sampling baseline: every reward evaluated exactly with all particles.
pub fn ss_solve<T: Scalar>(tree: &BeliefTree<T>, problem: &Problem<T>) -> Result<SsSolution<T>> {
    let n = tree.len();
    let n_max = tree.schedule().n_max();
    let gamma = problem.gamma();
    let mut stats = SolveStats::default();
    let mut reward = vec![T::zero(); n];
    for id in 1..n {
        reward[id] = edge_reward(tree, problem, id, None, &mut stats.calls)?.lower();
    }
    let mut q = vec![Vec::new(); n];
    let mut value = vec![T::zero(); n];
    for id in (0..n).rev() {
        let node = tree.node(id);
        if node.actions.is_empty() {
            continue;
        }
        q[id] = node
            .actions
            .iter()
            .enumerate()
            .map(|(j, a)| {
                if a.terminal {
                    tree.terminal_value(problem, id)
                } else {
                    q_from_children(&node.children[j], |c| (reward[c], reward[c]), |c| (value[c], value[c]), gamma).0
                }
            })
            .collect();
        value[id] = q[id].iter().copied().fold(T::neg_infinity(), T::max);
    }
    let best_action = first_argmax(q[0].iter().copied()).expect("root has actions");
    let root_q = q[0]
        .iter()
        .enumerate()
        .map(|(j, &v)| QBoundsEntry { action: j, lower: v, upper: v, level: n_max, pruned: false })
        .collect();
    let node_levels = (1..n).map(|id| (tree.node(id).depth, tree.node(id).belief.len())).collect();
    Ok(SsSolution {
        solution: GivenTreeSolution { best_action, root_q, stats, node_levels },
        q,
        value,
    })
}
