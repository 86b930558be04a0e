//! Paired-seed runs of an exact planner and its simplified counterpart.

use rayon::prelude::*;
use serde::Serialize;

use belief_simplify::scenarios::ScenarioConfig;

use crate::config::PlannerKind;
use crate::episode::{run_episode, EpisodeOptions, TrialResult};
use crate::metrics::{particle_speedup, time_speedup};
use crate::{HarnessError, Result};

/// Outcome of one paired trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialCheck {
    pub seed: u64,
    pub passed: bool,
    /// First divergence, if any.
    pub divergence: Option<String>,
    pub baseline_motion_calls: u64,
    pub candidate_motion_calls: u64,
    pub particle_speedup: f64,
    /// `None` when a timer read zero.
    pub time_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub baseline: PlannerKind,
    pub candidate: PlannerKind,
    pub trials: Vec<TrialCheck>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> usize {
        self.trials.iter().filter(|t| t.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.trials.len()
    }

    /// `Err(ConsistencyViolation)` describing the first failed trial.
    pub fn check(&self) -> Result<()> {
        match self.trials.iter().find(|t| !t.passed) {
            None => Ok(()),
            Some(t) => Err(HarnessError::ConsistencyViolation {
                seed: t.seed,
                diff: t.divergence.clone().unwrap_or_default(),
            }),
        }
    }
}

/// Describes the first place where two paired episodes differ.
pub fn first_divergence(a: &TrialResult, b: &TrialResult) -> Option<String> {
    if a.sessions.len() != b.sessions.len() {
        return Some(format!("{} ran {} sessions, {} ran {}", a.planner, a.sessions.len(), b.planner, b.sessions.len()));
    }
    for (x, y) in a.sessions.iter().zip(&b.sessions) {
        let s = x.session;
        if let (Some(tx), Some(ty)) = (&x.trace, &y.trace) {
            if let Some(i) = (0..tx.len().max(ty.len())).find(|&i| tx.get(i) != ty.get(i)) {
                let (p, q) = (tx.get(i), ty.get(i));
                let step = match (p, q) {
                    (Some(p), Some(q)) => (0..p.len().max(q.len())).find(|&k| p.get(k) != q.get(k)).unwrap_or(0),
                    _ => 0,
                };
                return Some(format!(
                    "session {s}, simulation {i}, step {step}: {:?} vs {:?}",
                    p.and_then(|p| p.get(step)),
                    q.and_then(|q| q.get(step))
                ));
            }
        }
        if x.tree != y.tree {
            return Some(format!("session {s}: tree structure or visit counts differ"));
        }
        if x.action_index != y.action_index {
            return Some(format!("session {s}: action {} vs {}", x.action, y.action));
        }
        if x.reward.to_bits() != y.reward.to_bits() {
            return Some(format!("session {s}: reward {} vs {}", x.reward, y.reward));
        }
    }
    None
}

fn check_pair(cfg: &ScenarioConfig, baseline: PlannerKind, candidate: PlannerKind, seed: u64) -> Result<TrialCheck> {
    let opts = EpisodeOptions { record_traces: baseline.is_mcts() && candidate.is_mcts() };
    let a = run_episode(cfg, baseline, seed, opts)?;
    let b = run_episode(cfg, candidate, seed, opts)?;
    let divergence = first_divergence(&a, &b);
    let particles = b.ledger.node_particles.iter().flatten().map(|&(_, p)| p);
    Ok(TrialCheck {
        seed,
        passed: divergence.is_none(),
        divergence,
        baseline_motion_calls: a.ledger.motion_calls,
        candidate_motion_calls: b.ledger.motion_calls,
        particle_speedup: particle_speedup(cfg.n_x, particles),
        time_speedup: time_speedup(a.ledger.wall_ms(), b.ledger.wall_ms()).ok(),
    })
}

/// Runs both planners with seeds `seed_base..seed_base + trials` and compares actions, rewards
/// and, for two MCTS planners, the full simulation traces and tree signatures.
pub fn run_consistency_experiment(
    cfg: &ScenarioConfig,
    pair: (PlannerKind, PlannerKind),
    trials: usize,
    seed_base: u64,
) -> Result<ConsistencyReport> {
    let (baseline, candidate) = pair;
    if baseline.is_mcts() != candidate.is_mcts() {
        return Err(HarnessError::Config(format!("{baseline} and {candidate} do not plan on the same kind of tree")));
    }
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|t| check_pair(cfg, baseline, candidate, seed_base + t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConsistencyReport { baseline, candidate, trials })
}
