#![allow(dead_code)]

use belief_simplify::belief::{SimplificationSchedule, WeightedParticleBelief};
use belief_simplify::given_tree::{build_sparse_sampling_tree, BeliefTree, TreeOptions};
use belief_simplify::problem::Problem;
use belief_simplify::rng::{stream, Purpose};
use belief_simplify::scenarios::{build_problem, initial_belief, ScenarioConfig};
use serde_json::json;

/// Light-Dark config for given-tree tests.
pub fn light_dark(n_x: usize, n_max: usize, lambda: f64, n_z: &[usize], actions: &[&str]) -> ScenarioConfig {
    serde_json::from_value(json!({
        "name": "light_dark",
        "beacons": [[1.0, 2.0], [4.0, 1.0]],
        "sigma_t": 0.1,
        "sigma_o": 0.1,
        "prior_mean": [0.0, 0.0],
        "prior_var": [0.1, 0.1],
        "goal": [6.0, 6.0],
        "lambda": lambda,
        "gamma": 0.95,
        "horizon": n_z.len(),
        "n_z": n_z,
        "n_x": n_x,
        "n_max": n_max,
        "actions": actions,
    }))
    .unwrap()
}

/// Light-Dark with a terminal action for MCTS tests.
pub fn light_dark_mcts(n_x: usize, n_max: usize, lambda: f64, depth: usize, iterations: usize) -> ScenarioConfig {
    serde_json::from_value(json!({
        "name": "light_dark",
        "beacons": [[0.0, 0.0]],
        "sigma_t": 0.075,
        "sigma_o": 0.075,
        "beacon_mean": "absolute",
        "beacon_scale": "capped",
        "prior_mean": [-5.5, 0.0],
        "prior_var": [0.2, 0.2],
        "lambda": lambda,
        "gamma": 0.95,
        "state_reward": {"kind": "neg_distance", "goal": [0.0, 0.0]},
        "n_x": n_x,
        "n_max": n_max,
        "include_null": true,
        "terminal": {"goal": [0.0, 0.0], "radius": 0.5, "inside": 200.0, "outside": -200.0},
        "dpw": {"depth": depth, "iterations": iterations},
    }))
    .unwrap()
}

pub struct GivenTreeCase {
    pub cfg: ScenarioConfig,
    pub problem: Problem<f64>,
    pub tree: BeliefTree<f64>,
}

pub fn given_tree_case(cfg: ScenarioConfig, seed: u64) -> GivenTreeCase {
    let problem = build_problem::<f64>(&cfg).unwrap();
    let mut rng = stream(seed, Purpose::PriorSampling, 0, 0);
    let root: WeightedParticleBelief<f64> = initial_belief(&cfg, &mut rng).unwrap();
    let schedule = cfg.schedule().unwrap();
    let opts = TreeOptions { horizon: cfg.horizon, n_z: cfg.n_z.clone(), base_step: 0, seed };
    let tree = build_sparse_sampling_tree(root, &problem, &schedule, &opts).unwrap();
    GivenTreeCase { cfg, problem, tree }
}

pub fn schedule(n_x: usize, n_max: usize) -> SimplificationSchedule {
    SimplificationSchedule::uniform(n_x, n_max).unwrap()
}
