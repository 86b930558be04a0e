//! Seeded episodes: plan, execute on the simulated ground truth, update the belief, repeat.

use std::collections::BTreeMap;
use std::time::Instant;

use belief_simplify::belief::{SimplificationSchedule, WeightedParticleBelief};
use belief_simplify::given_tree::{build_sparse_sampling_tree, solve_given_tree, BeliefTree, TreeOptions};
use belief_simplify::mcts::{pft_dpw_plan, sith_pft_plan, MctsOptions, TraceStep, TreeSignature};
use belief_simplify::models::{pf_update, ModelCalls};
use belief_simplify::problem::Problem;
use belief_simplify::reward::{composite_reward, terminal_reward};
use belief_simplify::rng::{derive_seed, stream, Purpose};
use belief_simplify::scenarios::{build_problem, initial_belief, ScenarioConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PlannerKind;
use crate::metrics::particle_speedup;
use crate::{HarnessError, Result};

/// Planning work of one trial. Belief updates during execution are not counted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub motion_calls: u64,
    pub obs_calls: u64,
    /// Resimplification calls, counted recursively.
    pub resimplification_calls: u64,
    pub session_wall_ms: Vec<f64>,
    /// Per session: `(depth, particles)` of every posterior node's final reward.
    pub node_particles: Vec<Vec<(usize, usize)>>,
}

impl RunLedger {
    fn record(&mut self, calls: ModelCalls, resimplifications: u64, wall_ms: f64, levels: Vec<(usize, usize)>) {
        self.motion_calls += calls.motion;
        self.obs_calls += calls.observation;
        self.resimplification_calls += resimplifications;
        self.session_wall_ms.push(wall_ms);
        self.node_particles.push(levels);
    }

    pub fn wall_ms(&self) -> f64 {
        self.session_wall_ms.iter().sum()
    }
}

/// One planning step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: usize,
    pub action_index: usize,
    pub action: String,
    /// Reward collected by executing the action.
    pub reward: f64,
    /// Discounted return accumulated up to and including this session.
    pub cumulative_return: f64,
    pub calls: ModelCalls,
    pub resimplifications: u64,
    pub wall_ms: f64,
    pub particle_speedup: f64,
    #[serde(skip)]
    pub trace: Option<Vec<Vec<TraceStep>>>,
    #[serde(skip)]
    pub tree: Option<TreeSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub n_x: usize,
    pub sessions: Vec<SessionRecord>,
    /// `Σ γ^t ρ_t` over the executed sessions.
    pub ret: f64,
    /// The episode ended with a terminal action.
    pub terminated: bool,
    /// Ground-truth state before the first and after every executed session.
    pub states: Vec<Vec<f64>>,
    pub ledger: RunLedger,
}

impl TrialResult {
    pub fn actions(&self) -> Vec<usize> {
        self.sessions.iter().map(|s| s.action_index).collect()
    }

    pub fn particle_speedup(&self) -> f64 {
        particle_speedup(self.n_x, self.ledger.node_particles.iter().flatten().map(|&(_, p)| p))
    }

    /// Node counts keyed by `(depth, particles)` over all sessions.
    pub fn level_histogram(&self) -> BTreeMap<(usize, usize), u64> {
        let mut h = BTreeMap::new();
        for &key in self.ledger.node_particles.iter().flatten() {
            *h.entry(key).or_insert(0) += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    /// Keep MCTS simulation traces and tree signatures in the session records.
    pub record_traces: bool,
}

/// Result of a single planning call.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub action_index: usize,
    pub calls: ModelCalls,
    pub resimplifications: u64,
    /// `(depth, particles)` per posterior node.
    pub levels: Vec<(usize, usize)>,
    /// Root `(action index, Q lower, Q upper)`; equal bounds for exact planners.
    pub root_q: Vec<(usize, f64, f64)>,
    pub trace: Option<Vec<Vec<TraceStep>>>,
    pub signature: Option<TreeSignature>,
    pub tree: Option<BeliefTree<f64>>,
}

/// Seed of the planner at `session`.
pub fn session_seed(seed: u64, session: usize) -> u64 {
    derive_seed(seed, Purpose::TreeConstruction, session as u64, 0)
}

/// Plans once from `belief` at time step `step`.
#[allow(clippy::too_many_arguments)]
pub fn plan_once(
    cfg: &ScenarioConfig,
    problem: &Problem<f64>,
    schedule: &SimplificationSchedule,
    planner: PlannerKind,
    belief: &WeightedParticleBelief<f64>,
    step: usize,
    seed: u64,
    record_trace: bool,
) -> Result<PlanOutcome> {
    if let Some(kind) = planner.given_tree() {
        if cfg.n_z.is_empty() {
            return Err(HarnessError::Unsupported { planner: planner.name(), reason: "n_z is not set".into() });
        }
        let opts = TreeOptions { horizon: cfg.horizon, n_z: cfg.n_z.clone(), base_step: step, seed };
        let tree = build_sparse_sampling_tree(belief.clone(), problem, schedule, &opts)?;
        let sol = solve_given_tree(kind, &tree, problem, cfg.initial_reward_level)?;
        return Ok(PlanOutcome {
            action_index: sol.best_action,
            calls: sol.stats.calls,
            resimplifications: sol.stats.resimplifications,
            levels: sol.node_levels,
            root_q: sol.root_q.iter().map(|e| (e.action, e.lower, e.upper)).collect(),
            trace: None,
            signature: None,
            tree: Some(tree),
        });
    }
    let dpw = cfg.dpw.clone().unwrap_or_default();
    let mut opts = MctsOptions::new(dpw, seed);
    opts.base_step = step;
    opts.record_trace = record_trace;
    let res = match planner {
        PlannerKind::PftDpw => pft_dpw_plan(belief.clone(), problem, &opts)?,
        _ => sith_pft_plan(belief.clone(), problem, schedule, &opts)?,
    };
    let levels = if res.levels.is_empty() {
        vec![(0, belief.len()); res.tree.nodes.len().saturating_sub(1)]
    } else {
        res.levels.iter().map(|r| (r.depth, schedule.size(r.level))).collect()
    };
    let root_q = res.root.iter().map(|r| (r.action_index, r.q_lower, r.q_upper)).collect();
    Ok(PlanOutcome {
        action_index: res.best_action,
        calls: res.stats.calls,
        resimplifications: res.stats.resimplifications,
        levels,
        root_q,
        trace: record_trace.then_some(res.trace),
        signature: Some(res.tree),
        tree: None,
    })
}

/// Snake-case scenario name as used in configs.
pub fn scenario_name(cfg: &ScenarioConfig) -> String {
    serde_json::to_value(cfg.name).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Runs `cfg.sessions` plan/execute/update cycles with `planner`.
pub fn run_episode(cfg: &ScenarioConfig, planner: PlannerKind, seed: u64, opts: EpisodeOptions) -> Result<TrialResult> {
    let problem = build_problem::<f64>(cfg)?;
    let schedule = cfg.schedule()?;
    let mut belief: WeightedParticleBelief<f64> = initial_belief(cfg, &mut stream(seed, Purpose::PriorSampling, 0, 0))?;
    let mut state = cfg.true_state();
    let gamma = cfg.gamma;
    let mut result = TrialResult {
        scenario: scenario_name(cfg),
        planner,
        seed,
        n_x: cfg.n_x,
        sessions: Vec::new(),
        ret: 0.0,
        terminated: false,
        states: vec![state.clone()],
        ledger: RunLedger::default(),
    };
    let mut discount = 1.0;
    for session in 0..cfg.sessions {
        let start = Instant::now();
        let out = plan_once(cfg, &problem, &schedule, planner, &belief, session, session_seed(seed, session), opts.record_traces)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let action = problem.actions.at(session)[out.action_index].clone();

        let reward = if action.terminal {
            problem.reward.terminal.as_ref().map_or(0.0, |t| terminal_reward(&belief, t))
        } else {
            let next_state = problem.transition.sample(&state, &action, &mut stream(seed, Purpose::Execution, session as u64, 0));
            let z = problem.observation.sample(&next_state, &mut stream(seed, Purpose::Execution, session as u64, 1));
            let mut rng = stream(seed, Purpose::Execution, session as u64, 2);
            let next = pf_update(&belief, &action, &z, problem.transition.as_ref(), problem.observation.as_ref(), &mut rng)?;
            let input = problem.input(&belief, &action, &z, &next);
            let r = composite_reward(&input, &problem.reward, &mut ModelCalls::default())?;
            belief = next;
            state = next_state;
            result.states.push(state.clone());
            r
        };
        result.ret += discount * reward;
        discount *= gamma;

        let speedup = particle_speedup(cfg.n_x, out.levels.iter().map(|&(_, p)| p));
        result.ledger.record(out.calls, out.resimplifications, wall_ms, out.levels);
        result.sessions.push(SessionRecord {
            session,
            action_index: out.action_index,
            action: action.name.clone(),
            reward,
            cumulative_return: result.ret,
            calls: out.calls,
            resimplifications: out.resimplifications,
            wall_ms,
            particle_speedup: speedup,
            trace: out.trace,
            tree: out.signature,
        });
        if action.terminal {
            result.terminated = true;
            break;
        }
    }
    Ok(result)
}

/// Runs every planner on seeds `seed_base..seed_base + trials`, trials in parallel.
///
/// Results are ordered by seed, then by the order of `planners`.
pub fn run_trials(
    cfg: &ScenarioConfig,
    planners: &[PlannerKind],
    trials: usize,
    seed_base: u64,
    opts: EpisodeOptions,
) -> Result<Vec<TrialResult>> {
    let per_seed: Vec<Vec<TrialResult>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| planners.iter().map(|&p| run_episode(cfg, p, seed_base + t, opts)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}
