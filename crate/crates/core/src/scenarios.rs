//! Problem instances (Light-Dark, target tracking, safe localization) and reference entropy estimators.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{make_index_chain, IndexChain, SimplificationSchedule, WeightedParticleBelief};
use crate::entropy::BoundsInput;
use crate::given_tree::InitialRewardLevel;
use crate::mcts::DpwConfig;
use crate::models::{
    pf_update, Action, BeaconMean, BeaconObservationModel, BeaconScale, GaussianDriftModel, LinearGaussianObservation,
    ModelError, ObservationModel, TargetObservationModel, TransitionModel,
};
use crate::problem::{ActionSet, Problem};
use crate::reward::{RewardOn, RewardSpec, RewardVariant, SafetySpec, StateReward, TerminalReward};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("kernel bandwidth is zero along some axis")]
    DegenerateBandwidth,
    #[error("covariance is not positive definite")]
    NonPSDCovariance,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    LightDark,
    TargetTracking,
    SafeLocalization,
}

/// Names of the eight planar unit moves, in action-index order.
pub const DIRECTIONS: [&str; 8] = ["right", "up_right", "up", "up_left", "left", "down_left", "down", "down_right"];

/// Unit displacement for a direction name (`null` is the zero move).
pub fn direction(name: &str) -> Option<[f64; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Some(match name {
        "right" => [1.0, 0.0],
        "up_right" => [h, h],
        "up" => [0.0, 1.0],
        "up_left" => [-h, h],
        "left" => [-1.0, 0.0],
        "down_left" => [-h, -h],
        "down" => [0.0, -1.0],
        "down_right" => [h, -h],
        "null" => [0.0, 0.0],
        _ => return None,
    })
}

fn default_d_min() -> f64 {
    1e-4
}

fn default_gamma() -> f64 {
    0.95
}

fn default_n_max() -> usize {
    10
}

fn default_one() -> usize {
    1
}

/// Complete description of a scenario and of the planner settings used on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: ScenarioKind,
    pub beacons: Vec<[f64; 2]>,
    pub sigma_t: f64,
    pub sigma_o: f64,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
    #[serde(default)]
    pub beacon_mean: Option<BeaconMean>,
    #[serde(default)]
    pub beacon_scale: Option<BeaconScale>,
    pub prior_mean: Vec<f64>,
    /// Per-axis prior variance.
    pub prior_var: Vec<f64>,
    /// Ground-truth initial state; defaults to the prior mean.
    #[serde(default)]
    pub true_state: Option<Vec<f64>>,
    #[serde(default)]
    pub goal: Vec<f64>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Overrides the scenario's default state reward.
    #[serde(default)]
    pub state_reward: Option<StateReward>,
    #[serde(default = "default_one")]
    pub horizon: usize,
    #[serde(default)]
    pub n_z: Vec<usize>,
    #[serde(default = "default_one")]
    pub sessions: usize,
    pub n_x: usize,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub initial_reward_level: InitialRewardLevel,
    /// Direction names of the planar moves to offer; empty means all eight.
    #[serde(default)]
    pub actions: Vec<String>,
    /// Adds a terminal `null` action (MCTS Light-Dark).
    #[serde(default)]
    pub include_null: bool,
    #[serde(default)]
    pub terminal: Option<TerminalReward>,
    #[serde(default)]
    pub safety: Option<SafetySpec>,
    #[serde(default)]
    pub dpw: Option<DpwConfig>,
    /// Target motion pattern, as direction names.
    #[serde(default)]
    pub target_cycle: Vec<String>,
    /// Replaces σ_T in the far branch of the agent-target offset noise.
    #[serde(default)]
    pub target_offset_sigma: Option<f64>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ScenarioError::InvalidConfig(m));
        if !(self.sigma_t > 0.0 && self.sigma_o > 0.0 && self.d_min > 0.0) {
            return bad("σ_T, σ_O and d_min must be positive".into());
        }
        if self.beacons.is_empty() {
            return bad("at least one beacon is required".into());
        }
        let dim = self.state_dim();
        if self.prior_mean.len() != dim || self.prior_var.len() != dim {
            return bad(format!("prior must have dimension {dim}"));
        }
        if self.prior_var.iter().any(|v| !(*v > 0.0)) {
            return bad("prior variances must be positive".into());
        }
        if self.true_state.as_ref().is_some_and(|x| x.len() != dim) {
            return bad(format!("true_state must have dimension {dim}"));
        }
        if self.n_x == 0 || self.n_max == 0 || self.n_max > self.n_x {
            return bad(format!("{} levels do not fit {} particles", self.n_max, self.n_x));
        }
        if !self.n_z.is_empty() && self.n_z.len() != self.horizon {
            return bad(format!("n_z has {} entries for horizon {}", self.n_z.len(), self.horizon));
        }
        if let Some(n) = self.actions.iter().find(|n| direction(n).is_none() || *n == "null") {
            return bad(format!("unknown move {n:?}"));
        }
        if self.name == ScenarioKind::TargetTracking {
            if self.target_cycle.is_empty() {
                return bad("target tracking needs a target cycle".into());
            }
            if let Some(n) = self.target_cycle.iter().find(|n| direction(n).is_none()) {
                return bad(format!("unknown direction {n:?}"));
            }
        }
        if self.name == ScenarioKind::SafeLocalization && self.safety.is_none() {
            return bad("safe localization needs a safety block".into());
        }
        if let Some(d) = &self.dpw {
            d.validate().map_err(ScenarioError::InvalidConfig)?;
        }
        self.reward_spec().validate().map_err(|e| ScenarioError::InvalidConfig(e.to_string()))
    }

    pub fn state_dim(&self) -> usize {
        match self.name {
            ScenarioKind::TargetTracking => 4,
            _ => 2,
        }
    }

    pub fn schedule(&self) -> Result<SimplificationSchedule> {
        SimplificationSchedule::uniform(self.n_x, self.n_max).map_err(|e| ScenarioError::InvalidConfig(e.to_string()))
    }

    pub fn true_state(&self) -> Vec<f64> {
        self.true_state.clone().unwrap_or_else(|| self.prior_mean.clone())
    }

    pub fn reward_spec(&self) -> RewardSpec {
        let state_reward = self.state_reward.clone().unwrap_or_else(|| match self.name {
            ScenarioKind::TargetTracking => StateReward::NegAgentTargetSquaredDistance,
            _ => StateReward::NegSquaredDistance { goal: self.goal.clone() },
        });
        let variant = match (&self.name, &self.safety) {
            (ScenarioKind::SafeLocalization, Some(s)) => RewardVariant::SafeLocalization(s.clone()),
            _ => RewardVariant::Entropy,
        };
        RewardSpec {
            lambda: self.lambda,
            gamma: self.gamma,
            state_reward,
            reward_on: RewardOn::Posterior,
            variant,
            terminal: self.terminal.clone(),
        }
    }
}

fn beacon_model<T: Scalar>(cfg: &ScenarioConfig, default_mean: BeaconMean) -> Result<BeaconObservationModel<T>> {
    let beacons = cfg.beacons.iter().map(|b| vec![lit(b[0]), lit(b[1])]).collect();
    Ok(BeaconObservationModel::new(
        beacons,
        lit(cfg.sigma_o),
        lit(cfg.d_min),
        cfg.beacon_mean.unwrap_or(default_mean),
        cfg.beacon_scale.unwrap_or(BeaconScale::Floored),
    )?)
}

fn planar_actions<T: Scalar>(names: &[String], null: Option<bool>) -> Vec<Action<T>> {
    let names: Vec<&str> = if names.is_empty() { DIRECTIONS.to_vec() } else { names.iter().map(String::as_str).collect() };
    let mut actions: Vec<Action<T>> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let d = direction(n).unwrap();
            Action::new(i, *n, vec![lit(d[0]), lit(d[1])])
        })
        .collect();
    let id = actions.len();
    match null {
        Some(true) => actions.push(Action::terminal(id, "null", 2)),
        Some(false) => actions.push(Action::new(id, "null", vec![T::zero(); 2])),
        None => {}
    }
    actions
}

/// Light-Dark (and safe localization, which shares its models).
pub fn build_light_dark<T: Scalar>(cfg: &ScenarioConfig) -> Result<Problem<T>> {
    cfg.validate()?;
    if cfg.name == ScenarioKind::TargetTracking {
        return Err(ScenarioError::InvalidConfig("not a Light-Dark configuration".into()));
    }
    let transition = GaussianDriftModel::isotropic(2, lit(cfg.sigma_t))?;
    let obs = beacon_model::<T>(cfg, BeaconMean::Relative)?;
    let actions = planar_actions(&cfg.actions, cfg.include_null.then_some(true));
    Ok(Problem::new(Arc::new(transition), Arc::new(obs), cfg.reward_spec(), ActionSet::Fixed(actions))?)
}

/// Joint agent/target tracking with a cyclic target motion pattern.
pub fn build_target_tracking<T: Scalar>(cfg: &ScenarioConfig) -> Result<Problem<T>> {
    cfg.validate()?;
    if cfg.name != ScenarioKind::TargetTracking {
        return Err(ScenarioError::InvalidConfig("not a target-tracking configuration".into()));
    }
    let transition = GaussianDriftModel::isotropic(4, lit(cfg.sigma_t))?;
    let beacon = beacon_model::<T>(cfg, BeaconMean::Absolute)?;
    let far = cfg.target_offset_sigma.unwrap_or(cfg.sigma_t);
    let obs = TargetObservationModel::new(beacon, lit(far), lit(cfg.sigma_o), lit(cfg.d_min))?;
    let cycle = cfg
        .target_cycle
        .iter()
        .map(|n| {
            let d = direction(n).unwrap();
            vec![lit(d[0]), lit(d[1])]
        })
        .collect();
    let actions = ActionSet::TargetCycle { agent: planar_actions(&cfg.actions, Some(false)), cycle };
    Ok(Problem::new(Arc::new(transition), Arc::new(obs), cfg.reward_spec(), actions)?)
}

/// Dispatches on the scenario kind.
pub fn build_problem<T: Scalar>(cfg: &ScenarioConfig) -> Result<Problem<T>> {
    match cfg.name {
        ScenarioKind::TargetTracking => build_target_tracking(cfg),
        _ => build_light_dark(cfg),
    }
}

fn normal<T: Scalar>(rng: &mut dyn RngCore) -> T {
    let v: f64 = StandardNormal.sample(rng);
    lit(v)
}

/// Equally weighted samples from `N(mean, diag(var))`.
pub fn gaussian_belief<T: Scalar>(mean: &[f64], var: &[f64], n_x: usize, rng: &mut dyn RngCore) -> Result<WeightedParticleBelief<T>> {
    let mut states = Vec::with_capacity(n_x * mean.len());
    for _ in 0..n_x {
        for (m, v) in mean.iter().zip(var) {
            states.push(lit::<T>(*m) + lit::<T>(v.sqrt()) * normal::<T>(rng));
        }
    }
    Ok(WeightedParticleBelief::uniform(mean.len(), states).map_err(ModelError::from)?)
}

/// Initial belief of a scenario.
pub fn initial_belief<T: Scalar>(cfg: &ScenarioConfig, rng: &mut dyn RngCore) -> Result<WeightedParticleBelief<T>> {
    gaussian_belief(&cfg.prior_mean, &cfg.prior_var, cfg.n_x, rng)
}

fn diag_gauss_pdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut q = 0.0;
    let mut norm = 1.0;
    for k in 0..x.len() {
        q += (x[k] - mean[k]).powi(2) / var[k];
        norm *= std::f64::consts::TAU * var[k];
    }
    (-0.5 * q).exp() / norm.sqrt()
}

/// Means of the four-component proposal used to seed weighted particles in the bounds study.
pub const PROPOSAL_MEANS: [[f64; 2]; 4] = [[0.0, 1.0], [1.0, 0.0], [-1.0, 0.0], [1.0, -1.0]];
/// Per-axis variance of every proposal component.
pub const PROPOSAL_VAR: [f64; 2] = [2.0, 0.2];

/// Importance-weighted particles for the prior `N(mean, diag(var))`, drawn from the mixture proposal.
pub fn mixture_proposal_belief<T: Scalar>(mean: &[f64], var: &[f64], n_x: usize, rng: &mut dyn RngCore) -> Result<WeightedParticleBelief<T>> {
    if mean.len() != 2 || var.len() != 2 {
        return Err(ScenarioError::InvalidConfig("the mixture proposal is planar".into()));
    }
    let mut states = Vec::with_capacity(2 * n_x);
    let mut weights = Vec::with_capacity(n_x);
    for _ in 0..n_x {
        let c = PROPOSAL_MEANS[rng.random_range(0..PROPOSAL_MEANS.len())];
        let x = [
            c[0] + PROPOSAL_VAR[0].sqrt() * normal::<f64>(rng),
            c[1] + PROPOSAL_VAR[1].sqrt() * normal::<f64>(rng),
        ];
        let q: f64 = PROPOSAL_MEANS.iter().map(|m| 0.25 * diag_gauss_pdf(&x, m, &PROPOSAL_VAR)).sum();
        let p = diag_gauss_pdf(&x, mean, var);
        states.extend([lit::<T>(x[0]), lit::<T>(x[1])]);
        weights.push(lit::<T>(p / q));
    }
    Ok(WeightedParticleBelief::new(2, states, weights).map_err(ModelError::from)?)
}

/// Gaussian belief tracked in closed form (identity observation matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilter {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanFilter {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.clone().cholesky().is_none() {
            return Err(ScenarioError::NonPSDCovariance);
        }
        Ok(Self { mean, cov })
    }

    /// `x' = x + a + w`, `w ~ N(0, q I)`.
    pub fn predict(&mut self, displacement: &[f64], q: f64) {
        for (m, d) in self.mean.iter_mut().zip(displacement) {
            *m += d;
        }
        let n = self.cov.nrows();
        self.cov += DMatrix::identity(n, n) * q;
    }

    /// `z = x + v`, `v ~ N(0, r I)`.
    pub fn update(&mut self, z: &[f64], r: f64) -> Result<()> {
        let n = self.cov.nrows();
        let s = &self.cov + DMatrix::identity(n, n) * r;
        let s_inv = s.cholesky().ok_or(ScenarioError::NonPSDCovariance)?.inverse();
        let k = &self.cov * s_inv;
        let innov = DVector::from_column_slice(z) - &self.mean;
        self.mean += &k * innov;
        let cov = (DMatrix::identity(n, n) - k) * &self.cov;
        self.cov = (&cov + cov.transpose()) * 0.5;
        Ok(())
    }

    pub fn entropy(&self) -> Result<f64> {
        gaussian_entropy(&self.cov)
    }
}

/// `½ ln((2πe)^d det Σ)`.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov.clone().cholesky().ok_or(ScenarioError::NonPSDCovariance)?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let d = cov.nrows() as f64;
    Ok(0.5 * (d * (std::f64::consts::TAU * std::f64::consts::E).ln() + log_det))
}

/// One step of the closed-form reference: motion noise variance and observation noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanStep {
    pub motion_var: f64,
    pub obs_var: f64,
}

/// Posterior entropy after every step of a linear-Gaussian sequence.
pub fn kalman_entropy_reference(prior_cov: &DMatrix<f64>, steps: &[KalmanStep]) -> Result<Vec<f64>> {
    let n = prior_cov.nrows();
    let mut kf = KalmanFilter::new(DVector::zeros(n), prior_cov.clone())?;
    let zero = vec![0.0; n];
    steps
        .iter()
        .map(|s| {
            kf.predict(&zero, s.motion_var);
            kf.update(&zero, s.obs_var)?;
            kf.entropy()
        })
        .collect()
}

/// Kernel density estimate of the differential entropy with Silverman's per-axis bandwidth.
pub fn kde_entropy<T: Scalar>(belief: &WeightedParticleBelief<T>) -> Result<T> {
    let n = belief.len();
    let d = belief.dim();
    if n < 2 {
        return Err(ScenarioError::DegenerateBandwidth);
    }
    let factor = (lit::<T>(4.0) / (T::from_usize((d + 2) * n).unwrap())).powf(T::one() / T::from_usize(d + 4).unwrap());
    let h: Vec<T> = belief.axis_variance().into_iter().map(|v| v.sqrt() * factor).collect();
    if h.iter().any(|&hk| !(hk > T::zero())) {
        return Err(ScenarioError::DegenerateBandwidth);
    }
    let half = lit::<T>(0.5);
    let log_norm = h.iter().fold(T::zero(), |acc, &hk| acc - hk.ln() - half * T::TAU().ln());
    let w = belief.normalized_weights();
    let mut acc = crate::scalar::NeumaierSum::new();
    for i in 0..n {
        // A zero-weight particle contributes nothing, and its density may underflow to 0.
        if !(w[i] > T::zero()) {
            continue;
        }
        let xi = belief.state(i);
        let mut p = T::zero();
        for j in 0..n {
            let xj = belief.state(j);
            let mut q = T::zero();
            for k in 0..d {
                let t = (xi[k] - xj[k]) / h[k];
                q = q + t * t;
            }
            p = p + w[j] * (log_norm - half * q).exp();
        }
        acc.add(w[i] * p.ln());
    }
    Ok(-acc.value())
}

/// A random linear-Gaussian reward edge used to exercise the entropy bounds.
pub struct LinearGaussianInstance<T: Scalar> {
    pub prev: WeightedParticleBelief<T>,
    pub post: WeightedParticleBelief<T>,
    pub action: Action<T>,
    pub observation: Vec<T>,
    pub transition: GaussianDriftModel<T>,
    pub obs: LinearGaussianObservation<T>,
    pub m: T,
    pub chain: IndexChain,
}

impl<T: Scalar> LinearGaussianInstance<T> {
    pub fn input(&self) -> BoundsInput<'_, T> {
        BoundsInput {
            prev: &self.prev,
            action: &self.action,
            observation: &self.observation,
            post: &self.post,
            transition: &self.transition,
            obs: &self.obs,
        }
    }
}

/// Draws a random planar instance with `n_x` weighted particles and the given schedule.
pub fn random_linear_gaussian_instance<T: Scalar>(
    n_x: usize,
    schedule: &SimplificationSchedule,
    rng: &mut dyn RngCore,
) -> Result<LinearGaussianInstance<T>> {
    let sigma_t: f64 = rng.random_range(0.2..1.0);
    let sigma_o: f64 = rng.random_range(0.2..1.5);
    let spread: f64 = rng.random_range(0.1..1.5);
    let transition = GaussianDriftModel::isotropic(2, lit(sigma_t))?;
    let obs = LinearGaussianObservation::new(2, lit(sigma_o))?;
    let mut states = Vec::with_capacity(2 * n_x);
    let mut weights = Vec::with_capacity(n_x);
    for _ in 0..n_x {
        states.push(lit::<T>(spread * normal::<f64>(rng)));
        states.push(lit::<T>(spread * normal::<f64>(rng)));
        weights.push(lit::<T>(rng.random_range(0.1..1.0)));
    }
    let prev = WeightedParticleBelief::new(2, states, weights).map_err(ModelError::from)?;
    let action = Action::new(0, "move", vec![lit(rng.random_range(-1.0..1.0)), lit(rng.random_range(-1.0..1.0))]);
    let truth = transition.sample(prev.state(rng.random_range(0..n_x)), &action, rng);
    let observation = obs.sample(&truth, rng);
    let post = pf_update(&prev, &action, &observation, &transition, &obs, rng)?;
    let chain = make_index_chain(n_x, schedule, rng).map_err(ModelError::from)?;
    let m = transition.density_max()?;
    Ok(LinearGaussianInstance { prev, post, action, observation, transition, obs, m, chain })
}
