//! Transition and observation models, and the particle-filter belief update.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, WeightedParticleBelief};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("observation has zero likelihood under every particle")]
    ZeroLikelihoodObservation,
    #[error("model density has no finite supremum")]
    UnboundedDensity,
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// A control input: a displacement of the state, optionally ending the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Action<T> {
    pub id: usize,
    pub name: String,
    pub displacement: Vec<T>,
    pub terminal: bool,
}

impl<T: Scalar> Action<T> {
    pub fn new(id: usize, name: impl Into<String>, displacement: Vec<T>) -> Self {
        Self { id, name: name.into(), displacement, terminal: false }
    }

    pub fn terminal(id: usize, name: impl Into<String>, dim: usize) -> Self {
        Self { id, name: name.into(), displacement: vec![T::zero(); dim], terminal: true }
    }
}

/// Counts of model density evaluations spent on rewards and bounds.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCalls {
    pub motion: u64,
    pub observation: u64,
}

impl ModelCalls {
    pub fn add(&mut self, other: ModelCalls) {
        self.motion += other.motion;
        self.observation += other.observation;
    }
}

pub trait TransitionModel<T: Scalar>: Send + Sync {
    fn state_dim(&self) -> usize;
    fn sample(&self, x: &[T], a: &Action<T>, rng: &mut dyn RngCore) -> Vec<T>;
    fn log_density(&self, x_next: &[T], x: &[T], a: &Action<T>) -> T;
    fn density(&self, x_next: &[T], x: &[T], a: &Action<T>) -> T {
        self.log_density(x_next, x, a).exp()
    }
    /// Supremum of `density` over all arguments.
    fn density_max(&self) -> Result<T>;
}

pub trait ObservationModel<T: Scalar>: Send + Sync {
    fn obs_dim(&self) -> usize;
    fn sample(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T>;
    fn log_density(&self, z: &[T], x: &[T]) -> T;
    fn density(&self, z: &[T], x: &[T]) -> T {
        self.log_density(z, x).exp()
    }
}

#[inline]
fn std_normal<T: Scalar>(rng: &mut dyn RngCore) -> T {
    let v: f64 = StandardNormal.sample(rng);
    lit(v)
}

/// Log density of an isotropic Gaussian with standard deviation `sigma` at offset `diff`.
#[inline]
fn iso_gauss_log<T: Scalar>(diff: impl Iterator<Item = T>, sigma: T, dim: usize) -> T {
    let mut q = T::zero();
    for d in diff {
        let t = d / sigma;
        q = q + t * t;
    }
    let d = T::from_usize(dim).unwrap();
    let half = lit::<T>(0.5);
    -half * q - d * sigma.ln() - half * d * (T::TAU()).ln()
}

/// `x' ~ N(x + a, diag(σ_k²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDriftModel<T> {
    sigma: Vec<T>,
    log_norm: T,
}

impl<T: Scalar> GaussianDriftModel<T> {
    pub fn new(sigma: Vec<T>) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|s| !(s.is_finite() && *s > T::zero())) {
            return Err(ModelError::InvalidParameter("motion noise must be positive per axis".into()));
        }
        let half = lit::<T>(0.5);
        let log_norm = sigma.iter().fold(T::zero(), |acc, s| acc - s.ln() - half * T::TAU().ln());
        Ok(Self { sigma, log_norm })
    }

    pub fn isotropic(dim: usize, sigma: T) -> Result<Self> {
        Self::new(vec![sigma; dim])
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }
}

impl<T: Scalar> TransitionModel<T> for GaussianDriftModel<T> {
    fn state_dim(&self) -> usize {
        self.sigma.len()
    }

    fn sample(&self, x: &[T], a: &Action<T>, rng: &mut dyn RngCore) -> Vec<T> {
        x.iter()
            .zip(&a.displacement)
            .zip(&self.sigma)
            .map(|((&xi, &ai), &s)| xi + ai + s * std_normal::<T>(rng))
            .collect()
    }

    #[inline]
    fn log_density(&self, x_next: &[T], x: &[T], a: &Action<T>) -> T {
        let half = lit::<T>(0.5);
        let mut q = T::zero();
        for k in 0..self.sigma.len() {
            let t = (x_next[k] - x[k] - a.displacement[k]) / self.sigma[k];
            q = q + t * t;
        }
        self.log_norm - half * q
    }

    fn density_max(&self) -> Result<T> {
        Ok(self.log_norm.exp())
    }
}

/// Supremum of a transition density; the exact value for the Gaussian models shipped here.
pub fn transition_density_max<T: Scalar>(model: &dyn TransitionModel<T>) -> Result<T> {
    let m = model.density_max()?;
    if m.is_finite() && m > T::zero() {
        Ok(m)
    } else {
        Err(ModelError::UnboundedDensity)
    }
}

/// `z ~ N(x, σ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianObservation<T> {
    dim: usize,
    sigma: T,
}

impl<T: Scalar> LinearGaussianObservation<T> {
    pub fn new(dim: usize, sigma: T) -> Result<Self> {
        if dim == 0 || !(sigma > T::zero()) {
            return Err(ModelError::InvalidParameter("observation noise must be positive".into()));
        }
        Ok(Self { dim, sigma })
    }
}

impl<T: Scalar> ObservationModel<T> for LinearGaussianObservation<T> {
    fn obs_dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        x.iter().take(self.dim).map(|&xi| xi + self.sigma * std_normal::<T>(rng)).collect()
    }

    fn log_density(&self, z: &[T], x: &[T]) -> T {
        iso_gauss_log(z.iter().zip(x).map(|(&zi, &xi)| zi - xi), self.sigma, self.dim)
    }
}

/// Mean of a beacon observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeaconMean {
    /// Position relative to the nearest beacon, `x - x^b`.
    Relative,
    /// The position itself.
    Absolute,
}

/// How the noise standard deviation grows with the distance `d` to the nearest beacon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeaconScale {
    /// `σ_O · max(d, d_min)`.
    Floored,
    /// `σ_O · max(min(1, d), d_min)`, i.e. covariance `min(1, d²) σ_O²`.
    Capped,
}

/// Position observation whose noise shrinks near light beacons.
///
/// Acts on the leading `beacon dimension` coordinates of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconObservationModel<T> {
    beacons: Vec<Vec<T>>,
    sigma_o: T,
    d_min: T,
    mean: BeaconMean,
    scale: BeaconScale,
}

impl<T: Scalar> BeaconObservationModel<T> {
    pub fn new(beacons: Vec<Vec<T>>, sigma_o: T, d_min: T, mean: BeaconMean, scale: BeaconScale) -> Result<Self> {
        if beacons.is_empty() {
            return Err(ModelError::InvalidParameter("at least one beacon required".into()));
        }
        let dim = beacons[0].len();
        if dim == 0 || beacons.iter().any(|b| b.len() != dim) {
            return Err(ModelError::InvalidParameter("beacons must share a positive dimension".into()));
        }
        if !(sigma_o > T::zero()) || !(d_min > T::zero()) {
            return Err(ModelError::InvalidParameter("σ_O and d_min must be positive".into()));
        }
        Ok(Self { beacons, sigma_o, d_min, mean, scale })
    }

    pub fn beacons(&self) -> &[Vec<T>] {
        &self.beacons
    }

    fn dim(&self) -> usize {
        self.beacons[0].len()
    }

    /// Nearest beacon index and its distance.
    pub fn nearest(&self, x: &[T]) -> (usize, T) {
        let mut best = (0, T::infinity());
        for (i, b) in self.beacons.iter().enumerate() {
            let d2 = b.iter().zip(x).fold(T::zero(), |acc, (&bk, &xk)| acc + (xk - bk) * (xk - bk));
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    /// Noise standard deviation at state `x`.
    pub fn noise_std(&self, x: &[T]) -> T {
        let (_, d) = self.nearest(x);
        match self.scale {
            BeaconScale::Floored => self.sigma_o * d.max(self.d_min),
            BeaconScale::Capped => self.sigma_o * d.min(T::one()).max(self.d_min),
        }
    }

    /// Noise-free observation at `x`.
    pub fn mean_at(&self, x: &[T]) -> Vec<T> {
        match self.mean {
            BeaconMean::Absolute => x[..self.dim()].to_vec(),
            BeaconMean::Relative => {
                let (i, _) = self.nearest(x);
                x.iter().zip(&self.beacons[i]).map(|(&xk, &bk)| xk - bk).collect()
            }
        }
    }
}

impl<T: Scalar> ObservationModel<T> for BeaconObservationModel<T> {
    fn obs_dim(&self) -> usize {
        self.dim()
    }

    fn sample(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        let s = self.noise_std(x);
        self.mean_at(x).into_iter().map(|m| m + s * std_normal::<T>(rng)).collect()
    }

    fn log_density(&self, z: &[T], x: &[T]) -> T {
        let s = self.noise_std(x);
        let mean = self.mean_at(x);
        iso_gauss_log(z.iter().zip(&mean).map(|(&zi, &mi)| zi - mi), s, self.dim())
    }
}

/// Joint agent/target observation: a beacon fix of the agent times the agent-minus-target offset.
///
/// State layout is `[agent (2), target (2)]`; the observation is `[beacon part (2), offset (2)]`.
/// The offset covariance is `σ_far² · dist · I` when `dist ≥ d_min`, otherwise `σ_near² · I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetObservationModel<T> {
    beacon: BeaconObservationModel<T>,
    sigma_far: T,
    sigma_near: T,
    d_min: T,
}

impl<T: Scalar> TargetObservationModel<T> {
    pub fn new(beacon: BeaconObservationModel<T>, sigma_far: T, sigma_near: T, d_min: T) -> Result<Self> {
        if beacon.dim() != 2 {
            return Err(ModelError::InvalidParameter("target tracking is planar".into()));
        }
        if !(sigma_far > T::zero() && sigma_near > T::zero() && d_min > T::zero()) {
            return Err(ModelError::InvalidParameter("offset noise parameters must be positive".into()));
        }
        Ok(Self { beacon, sigma_far, sigma_near, d_min })
    }

    fn offset(x: &[T]) -> [T; 2] {
        [x[0] - x[2], x[1] - x[3]]
    }

    /// Standard deviation of the offset measurement at `x`.
    pub fn offset_std(&self, x: &[T]) -> T {
        let o = Self::offset(x);
        let dist = (o[0] * o[0] + o[1] * o[1]).sqrt();
        if dist >= self.d_min {
            self.sigma_far * dist.sqrt()
        } else {
            self.sigma_near
        }
    }
}

impl<T: Scalar> ObservationModel<T> for TargetObservationModel<T> {
    fn obs_dim(&self) -> usize {
        4
    }

    fn sample(&self, x: &[T], rng: &mut dyn RngCore) -> Vec<T> {
        let mut z = self.beacon.sample(&x[..2], rng);
        let s = self.offset_std(x);
        z.extend(Self::offset(x).iter().map(|&m| m + s * std_normal::<T>(rng)));
        z
    }

    fn log_density(&self, z: &[T], x: &[T]) -> T {
        let o = Self::offset(x);
        let s = self.offset_std(x);
        self.beacon.log_density(&z[..2], &x[..2]) + iso_gauss_log(z[2..4].iter().zip(&o).map(|(&a, &b)| a - b), s, 2)
    }
}

/// Sequential importance sampling update: propagate every particle and reweight by the likelihood.
pub fn pf_update<T: Scalar>(
    belief: &WeightedParticleBelief<T>,
    action: &Action<T>,
    observation: &[T],
    transition: &dyn TransitionModel<T>,
    obs: &dyn ObservationModel<T>,
    rng: &mut dyn RngCore,
) -> Result<WeightedParticleBelief<T>> {
    let n = belief.len();
    let dim = belief.dim();
    let mut states = Vec::with_capacity(n * dim);
    let mut log_w = Vec::with_capacity(n);
    for i in 0..n {
        let x_next = transition.sample(belief.state(i), action, rng);
        log_w.push(belief.weight(i).ln() + obs.log_density(observation, &x_next));
        states.extend_from_slice(&x_next);
    }
    let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() || max.is_nan() {
        return Err(ModelError::ZeroLikelihoodObservation);
    }
    let weights = log_w.iter().map(|&lw| (lw - max).exp()).collect();
    Ok(WeightedParticleBelief::new(dim, states, weights)?)
}

/// Draws a particle index proportionally to the weights.
pub fn sample_index<T: Scalar>(belief: &WeightedParticleBelief<T>, rng: &mut dyn RngCore) -> usize {
    let u: f64 = rand::Rng::random(rng);
    let target = lit::<T>(u) * belief.normalizer();
    let mut cum = T::zero();
    let mut last_positive = 0;
    for (i, &w) in belief.raw_weights().iter().enumerate() {
        if w > T::zero() {
            cum = cum + w;
            last_positive = i;
            if target < cum {
                return i;
            }
        }
    }
    last_positive
}

/// Samples a state from the belief, propagates it, and generates an observation there.
pub fn sample_observation<T: Scalar>(
    belief: &WeightedParticleBelief<T>,
    action: &Action<T>,
    transition: &dyn TransitionModel<T>,
    obs: &dyn ObservationModel<T>,
    rng: &mut dyn RngCore,
) -> (Vec<T>, Vec<T>) {
    let i = sample_index(belief, rng);
    let x_next = transition.sample(belief.state(i), action, rng);
    let z = obs.sample(&x_next, rng);
    (x_next, z)
}
