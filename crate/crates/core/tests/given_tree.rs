mod common;

use belief_simplify::given_tree::{
    lazy_bsp_plan, node_count, prune, sith_bsp_solve, ss_solve, InitialRewardLevel, LazyBsp, QBoundsEntry, SithBsp,
};
use belief_simplify::reward::{expected_state_reward, StateReward};
use common::{given_tree_case, light_dark, GivenTreeCase};

const THREE: [&str; 3] = ["right", "up", "up_right"];

fn entry(lower: f64, upper: f64) -> QBoundsEntry<f64> {
    QBoundsEntry { action: 0, lower, upper, level: 1, pruned: false }
}

fn kernel_entries(n_s: usize, n_x: usize) -> u64 {
    (2 * n_s * n_x - n_s * n_s) as u64
}

#[test]
fn prune_examples() {
    let mut two = vec![entry(0.0, 1.0), entry(2.0, 3.0)];
    assert_eq!(prune(&mut two), 1);
    assert!(two[0].pruned && !two[1].pruned);
    let mut overlap = vec![entry(0.0, 2.0), entry(1.0, 3.0)];
    assert_eq!(prune(&mut overlap), 0);
    let mut three = vec![entry(0.0, 1.0), entry(0.5, 2.0), entry(1.8, 3.0)];
    prune(&mut three);
    assert_eq!(three.iter().map(|e| e.pruned).collect::<Vec<_>>(), vec![true, false, false]);
    let mut touching = vec![entry(0.0, 1.0), entry(1.0, 2.0)];
    assert_eq!(prune(&mut touching), 0, "equal endpoints do not prune");
}

#[test]
fn tree_shape_and_determinism() {
    let case = given_tree_case(light_dark(10, 5, 0.5, &[1, 2], &THREE), 4);
    assert_eq!(case.tree.len(), node_count(3, &[1, 2]));
    let again = given_tree_case(light_dark(10, 5, 0.5, &[1, 2], &THREE), 4);
    for (a, b) in case.tree.nodes().iter().zip(again.tree.nodes()) {
        assert_eq!(a.observation, b.observation);
        assert_eq!(a.belief, b.belief);
        assert_eq!(a.chain, b.chain);
    }
    let single = given_tree_case(light_dark(10, 5, 0.5, &[1], &["up"]), 4);
    assert_eq!(single.tree.len(), 2);
}

#[test]
fn snapshot_has_one_line_per_node() {
    let case = given_tree_case(light_dark(10, 5, 0.5, &[1, 2], &THREE), 2);
    let mut buf = Vec::new();
    case.tree.write_json_lines(&mut buf, None).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), case.tree.len());
    assert_eq!(rows[0]["parent"], serde_json::Value::Null);
    assert_eq!(rows[5]["depth"], 2);
}

#[test]
fn one_step_tree_picks_best_expected_state_reward() {
    let mut cfg = light_dark(15, 3, 0.0, &[3], &["left", "up_right"]);
    cfg.horizon = 1;
    let case = given_tree_case(cfg, 8);
    let root = case.tree.root();
    let q: Vec<f64> = (0..2)
        .map(|j| {
            let kids = &root.children[j];
            kids.iter()
                .map(|&c| {
                    let n = case.tree.node(c);
                    expected_state_reward(&n.belief, n.action.as_ref().unwrap(), &case.problem.reward.state_reward)
                })
                .sum::<f64>()
                / kids.len() as f64
        })
        .collect();
    let best = if q[1] > q[0] { 1 } else { 0 };
    assert_eq!(best, 1, "moving toward the goal should win");
    let ss = ss_solve(&case.tree, &case.problem).unwrap();
    assert_eq!(ss.solution.best_action, best);
    for j in 0..2 {
        assert!((ss.q[0][j] - q[j]).abs() < 1e-12);
    }
}

#[test]
fn equal_values_break_ties_to_lowest_index() {
    let mut cfg = light_dark(12, 4, 0.0, &[1, 2], &THREE);
    cfg.state_reward = Some(StateReward::Constant { value: -1.0 });
    let case = given_tree_case(cfg, 3);
    assert_eq!(ss_solve(&case.tree, &case.problem).unwrap().solution.best_action, 0);
    assert_eq!(sith_bsp_solve(&case.tree, &case.problem, InitialRewardLevel::Coarsest).unwrap().best_action, 0);
    assert_eq!(lazy_bsp_plan(&case.tree, &case.problem).unwrap().best_action, 0);
}

#[test]
fn single_action_needs_no_descent() {
    let case = given_tree_case(light_dark(12, 4, 0.5, &[1, 2], &["up"]), 3);
    let mut lazy = LazyBsp::new(&case.tree, &case.problem).unwrap();
    assert!(!lazy.step().unwrap());
    let sol = lazy.run().unwrap();
    assert_eq!(sol.best_action, 0);
    assert_eq!(sol.stats.resimplifications, 0);
}

fn assert_close(lo: f64, hi: f64, exact: f64, what: &str) {
    let tol = 1e-9 * exact.abs().max(1.0);
    assert!(lo <= exact + tol && exact <= hi + tol, "{what}: {exact} outside [{lo}, {hi}]");
}

#[test]
fn forcing_finest_level_reproduces_exact_q() {
    for seed in 0..4 {
        let case = given_tree_case(light_dark(30, 6, 0.5, &[2, 2, 2], &THREE), seed);
        let ss = ss_solve(&case.tree, &case.problem).unwrap();
        let mut sith = SithBsp::new(&case.tree, &case.problem, InitialRewardLevel::Fixed(6)).unwrap();
        let sol = sith.solve().unwrap();
        assert_eq!(sol.best_action, ss.solution.best_action);
        for id in 0..case.tree.len() {
            for (e, &exact) in sith.node_q(id).iter().zip(&ss.q[id]) {
                let tol = 1e-9 * exact.abs().max(1.0);
                assert!((e.lower - exact).abs() <= tol && (e.upper - exact).abs() <= tol, "node {id}");
                assert!((0.5 * (e.lower + e.upper) - exact).abs() <= tol);
            }
        }
    }
}

fn solve_all(case: &GivenTreeCase) {
    let ss = ss_solve(&case.tree, &case.problem).unwrap();
    let mut sith = SithBsp::new(&case.tree, &case.problem, InitialRewardLevel::Coarsest).unwrap();
    let s = sith.solve().unwrap();
    for id in 0..case.tree.len() {
        for (j, e) in sith.node_q(id).iter().enumerate() {
            assert_close(e.lower, e.upper, ss.q[id][j], &format!("SITH node {id} action {j}"));
        }
    }

    let mut lazy = LazyBsp::new(&case.tree, &case.problem).unwrap();
    let mut steps = 0;
    loop {
        for (j, e) in lazy.node_q(0).iter().enumerate() {
            assert_close(e.lower, e.upper, ss.q[0][j], &format!("LAZY step {steps} action {j}"));
        }
        for id in 1..case.tree.len() {
            let (lo, hi) = lazy.value(id);
            if !case.tree.node(id).actions.is_empty() {
                assert_close(lo, hi, ss.value[id], &format!("LAZY step {steps} value {id}"));
            }
        }
        if !lazy.step().unwrap() {
            break;
        }
        steps += 1;
    }
    let l = lazy.run().unwrap();

    assert_eq!(s.best_action, ss.solution.best_action);
    assert_eq!(l.best_action, ss.solution.best_action);

    let n_x = case.cfg.n_x;
    let non_root = (case.tree.len() - 1) as u64;
    let ss_calls = ss.solution.stats.calls;
    assert_eq!(ss_calls.motion, (n_x * n_x) as u64 * non_root);
    assert_eq!(ss_calls.observation, n_x as u64 * non_root);
    assert_eq!(s.stats.calls.observation, ss_calls.observation);
    assert_eq!(l.stats.calls.observation, ss_calls.observation);

    for sol in [&s, &l] {
        let expected: u64 = sol.node_levels.iter().map(|&(_, p)| kernel_entries(p, n_x)).sum();
        assert_eq!(sol.stats.calls.motion, expected);
        assert!(sol.stats.promotions <= case.cfg.n_max as u64 * non_root);
        if sol.node_levels.iter().any(|&(_, p)| p < n_x) {
            assert!(sol.stats.calls.motion < ss_calls.motion);
        }
    }
}

#[test]
fn planners_agree_and_bracket_exact_values() {
    for (seed, lambda) in [(1u64, 0.1), (2, 0.5), (3, 1.0), (4, 0.1), (5, 0.5)] {
        let case = given_tree_case(light_dark(20, 10, lambda, &[1, 2, 2], &THREE), seed);
        solve_all(&case);
    }
}

#[test]
fn planners_agree_on_eight_actions() {
    for seed in 10..13 {
        let case = given_tree_case(light_dark(16, 8, 0.3, &[1, 2], &[]), seed);
        solve_all(&case);
    }
}

#[test]
fn child_value_initial_level_is_also_exact_in_decision() {
    for seed in 20..24 {
        let case = given_tree_case(light_dark(20, 5, 0.5, &[1, 2, 2], &THREE), seed);
        let ss = ss_solve(&case.tree, &case.problem).unwrap();
        let sol = sith_bsp_solve(&case.tree, &case.problem, InitialRewardLevel::ChildValueLevel).unwrap();
        assert_eq!(sol.best_action, ss.solution.best_action);
    }
}

#[test]
fn sith_q_entries_match_recomputation_from_children() {
    let case = given_tree_case(light_dark(20, 5, 0.5, &[1, 2, 2], &THREE), 6);
    let mut sith = SithBsp::new(&case.tree, &case.problem, InitialRewardLevel::Coarsest).unwrap();
    sith.solve().unwrap();
    let gamma = case.cfg.gamma;
    for id in 0..case.tree.len() {
        let node = case.tree.node(id);
        for (j, e) in sith.node_q(id).iter().enumerate() {
            let kids = &node.children[j];
            let (mut lo, mut hi) = (0.0, 0.0);
            for &c in kids {
                let r = sith.reward(c).unwrap();
                let (vl, vh) = sith.value(c);
                lo += r.lower() + gamma * vl;
                hi += r.upper() + gamma * vh;
            }
            let n = kids.len() as f64;
            assert!((e.lower - lo / n).abs() < 1e-12 && (e.upper - hi / n).abs() < 1e-12, "node {id} action {j}");
        }
    }
}

#[test]
fn zero_lambda_needs_no_resimplification() {
    let case = given_tree_case(light_dark(20, 5, 0.0, &[1, 2], &THREE), 9);
    let ss = ss_solve(&case.tree, &case.problem).unwrap();
    let s = sith_bsp_solve(&case.tree, &case.problem, InitialRewardLevel::Coarsest).unwrap();
    let l = lazy_bsp_plan(&case.tree, &case.problem).unwrap();
    assert_eq!(s.best_action, ss.solution.best_action);
    assert_eq!(l.best_action, ss.solution.best_action);
    assert_eq!(s.stats.calls.motion, 0);
    assert_eq!(l.stats.promotions, 0);
    for (e, x) in s.root_q.iter().zip(&ss.q[0]) {
        assert!((e.lower - x).abs() < 1e-12 && (e.upper - x).abs() < 1e-12);
    }
}
