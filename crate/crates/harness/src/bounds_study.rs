//! Passive study of the entropy estimators and bounds along a fixed action sequence.

use belief_simplify::belief::{make_index_chain, SimplificationSchedule, WeightedParticleBelief};
use belief_simplify::entropy::{boers_entropy, discrete_weight_entropy, entropy_bounds_at_level};
use belief_simplify::models::{pf_update, BeaconMean, BeaconObservationModel, BeaconScale, ModelCalls};
use belief_simplify::rng::{stream, Purpose};
use belief_simplify::scenarios::{
    build_problem, initial_belief, kalman_entropy_reference, kde_entropy, mixture_proposal_belief, KalmanStep,
    ScenarioConfig, ScenarioKind,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

fn default_fractions() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsStudyConfig {
    /// Direction names executed one after another.
    pub actions: Vec<String>,
    /// Bounds are computed with `round(f · n_x)` particles for each fraction `f`.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    /// Draw the initial particles from the four-component mixture proposal.
    #[serde(default = "yes")]
    pub mixture_prior: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBounds {
    pub particles: usize,
    /// Bounds on `−Ĥ`.
    pub lower: f64,
    pub upper: f64,
}

impl LevelBounds {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsStudyRow {
    pub step: usize,
    pub true_state: Vec<f64>,
    pub boers_entropy: f64,
    pub kde_entropy: f64,
    pub discrete_entropy: f64,
    pub kalman_entropy: f64,
    pub bounds: Vec<LevelBounds>,
}

impl BoundsStudyRow {
    /// Every bracket contains `−Ĥ` within `tol`.
    pub fn brackets(&self, tol: f64) -> bool {
        let v = -self.boers_entropy;
        self.bounds.iter().all(|b| b.lower <= v + tol && v <= b.upper + tol)
    }

    /// Bracket widths strictly decrease with the particle count.
    pub fn strictly_nested(&self) -> bool {
        self.bounds.windows(2).all(|w| w[1].width() < w[0].width())
    }
}

fn sizes(n_x: usize, fractions: &[f64]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(HarnessError::Config(format!("fraction {f} outside (0, 1]")));
            }
            Ok(((f * n_x as f64).round() as usize).clamp(1, n_x))
        })
        .collect::<Result<_>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Executes the action sequence on the simulated ground truth and evaluates every estimator after
/// each step.
pub fn bounds_study(cfg: &ScenarioConfig, study: &BoundsStudyConfig, seed: u64) -> Result<Vec<BoundsStudyRow>> {
    if study.actions.is_empty() {
        return Err(HarnessError::Config("the action sequence is empty".into()));
    }
    if cfg.name == ScenarioKind::TargetTracking {
        return Err(HarnessError::Config("the bounds study runs on planar scenarios".into()));
    }
    let problem = build_problem::<f64>(cfg)?;
    let available = problem.actions.at(0);
    let actions = study
        .actions
        .iter()
        .map(|n| {
            available
                .iter()
                .find(|a| &a.name == n)
                .cloned()
                .ok_or_else(|| HarnessError::Config(format!("action {n:?} is not available")))
        })
        .collect::<Result<Vec<_>>>()?;

    let n_x = cfg.n_x;
    let requested = sizes(n_x, &study.fractions)?;
    let mut levels = requested.clone();
    if *levels.last().unwrap() < n_x {
        levels.push(n_x);
    }
    let schedule = SimplificationSchedule::new(levels)?;

    let mut prior_rng = stream(seed, Purpose::PriorSampling, 0, 0);
    let mut belief: WeightedParticleBelief<f64> = if study.mixture_prior {
        mixture_proposal_belief(&cfg.prior_mean, &cfg.prior_var, n_x, &mut prior_rng)?
    } else {
        initial_belief(cfg, &mut prior_rng)?
    };
    let beacons = BeaconObservationModel::new(
        cfg.beacons.iter().map(|b| b.to_vec()).collect(),
        cfg.sigma_o,
        cfg.d_min,
        cfg.beacon_mean.unwrap_or(BeaconMean::Relative),
        cfg.beacon_scale.unwrap_or(BeaconScale::Floored),
    )?;

    let mut state = cfg.true_state();
    let mut rows = Vec::with_capacity(actions.len());
    let mut kalman_steps = Vec::with_capacity(actions.len());
    for (k, action) in actions.iter().enumerate() {
        let step = k as u64 + 1;
        let next_state = problem.transition.sample(&state, action, &mut stream(seed, Purpose::Execution, step, 0));
        let z = problem.observation.sample(&next_state, &mut stream(seed, Purpose::Execution, step, 1));
        let mut rng = stream(seed, Purpose::ParticlePropagation, step, 0);
        let next = pf_update(&belief, action, &z, problem.transition.as_ref(), problem.observation.as_ref(), &mut rng)?;

        let input = problem.input(&belief, action, &z, &next);
        let mut calls = ModelCalls::default();
        let boers = boers_entropy(&input, &mut calls)?;
        let chain = make_index_chain(n_x, &schedule, &mut stream(seed, Purpose::IndexChain, step, 0))?;
        let bounds = (1..=schedule.n_max())
            .filter(|&l| requested.contains(&schedule.size(l)))
            .map(|l| {
                let set = chain.level(l)?;
                let s = entropy_bounds_at_level(&input, &set, &set, problem.m, &mut calls)?;
                Ok(LevelBounds { particles: schedule.size(l), lower: s.lower(), upper: s.upper() })
            })
            .collect::<Result<Vec<_>>>()?;

        let noise = beacons.noise_std(&next_state);
        kalman_steps.push(KalmanStep { motion_var: cfg.sigma_t * cfg.sigma_t, obs_var: noise * noise });
        rows.push(BoundsStudyRow {
            step: k + 1,
            true_state: next_state.clone(),
            boers_entropy: boers,
            kde_entropy: kde_entropy(&next)?,
            discrete_entropy: discrete_weight_entropy(&next),
            kalman_entropy: 0.0,
            bounds,
        });
        belief = next;
        state = next_state;
    }
    let prior_cov = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&cfg.prior_var));
    let reference = kalman_entropy_reference(&prior_cov, &kalman_steps)?;
    for (row, h) in rows.iter_mut().zip(reference) {
        row.kalman_entropy = h;
    }
    Ok(rows)
}
