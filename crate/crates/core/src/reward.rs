//! Composite belief-dependent rewards `ρ = (1−λ)·r^x + λ·(−Ĥ)` and their interval form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{SimplificationIndexSet, WeightedParticleBelief};
use crate::entropy::{boers_entropy, entropy_bounds_at_level, BoundsInput, EntropyBoundsState, EntropyError};
use crate::models::{Action, ModelCalls};
use crate::scalar::{compensated_sum, lit, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid reward settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
}

pub type Result<T> = std::result::Result<T, RewardError>;

/// State-dependent reward `r(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateReward {
    Zero,
    Constant { value: f64 },
    /// `−‖x − goal‖²` over the leading coordinates.
    NegSquaredDistance { goal: Vec<f64> },
    /// `−‖x − goal‖` over the leading coordinates.
    NegDistance { goal: Vec<f64> },
    /// `−‖agent − target‖²` for the state layout `[agent (2), target (2)]`.
    NegAgentTargetSquaredDistance,
}

impl StateReward {
    pub fn eval<T: Scalar>(&self, x: &[T]) -> T {
        let sq_to = |goal: &[f64]| -> T {
            goal.iter().zip(x).fold(T::zero(), |acc, (&g, &xk)| {
                let d = xk - lit::<T>(g);
                acc + d * d
            })
        };
        match self {
            StateReward::Zero => T::zero(),
            StateReward::Constant { value } => lit(*value),
            StateReward::NegSquaredDistance { goal } => -sq_to(goal),
            StateReward::NegDistance { goal } => -sq_to(goal).sqrt(),
            StateReward::NegAgentTargetSquaredDistance => {
                let (dx, dy) = (x[0] - x[2], x[1] - x[3]);
                -(dx * dx + dy * dy)
            }
        }
    }
}

/// Which belief of the edge `(b, a, z, b')` the state reward is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardOn {
    Prior,
    #[default]
    Posterior,
}

/// Region of states considered safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SafeRegion {
    /// Safe where `normal · x ≤ offset`.
    HalfPlane { normal: Vec<f64>, offset: f64 },
    /// Safe outside every disk.
    OutsideDisks { centers: Vec<Vec<f64>>, radius: f64 },
}

impl SafeRegion {
    pub fn contains<T: Scalar>(&self, x: &[T]) -> bool {
        match self {
            SafeRegion::HalfPlane { normal, offset } => {
                let dot = normal.iter().zip(x).fold(T::zero(), |acc, (&n, &xk)| acc + lit::<T>(n) * xk);
                dot <= lit(*offset)
            }
            SafeRegion::OutsideDisks { centers, radius } => centers.iter().all(|c| {
                let d2 = c.iter().zip(x).fold(T::zero(), |acc, (&ck, &xk)| {
                    let d = xk - lit::<T>(ck);
                    acc + d * d
                });
                d2 > lit::<T>(radius * radius)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub region: SafeRegion,
    /// Confidence threshold in `(0, 1]`.
    pub delta: f64,
    pub safety_weight: f64,
}

/// Reward for a terminal action, paid per particle by whether it lies within `radius` of `goal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalReward {
    pub goal: Vec<f64>,
    pub radius: f64,
    pub inside: f64,
    pub outside: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardVariant {
    Entropy,
    SafeLocalization(SafetySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    /// Information weight λ.
    pub lambda: f64,
    pub gamma: f64,
    pub state_reward: StateReward,
    #[serde(default)]
    pub reward_on: RewardOn,
    pub variant: RewardVariant,
    #[serde(default)]
    pub terminal: Option<TerminalReward>,
}

impl RewardSpec {
    pub fn entropy(lambda: f64, gamma: f64, state_reward: StateReward) -> Self {
        Self { lambda, gamma, state_reward, reward_on: RewardOn::Posterior, variant: RewardVariant::Entropy, terminal: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RewardError::InvalidSettings(format!("λ = {} outside [0, 1]", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RewardError::InvalidSettings(format!("γ = {} outside (0, 1]", self.gamma)));
        }
        if let RewardVariant::SafeLocalization(s) = &self.variant {
            if !(s.delta > 0.0 && s.delta <= 1.0) {
                return Err(RewardError::InvalidSettings(format!("δ = {} outside (0, 1]", s.delta)));
            }
        }
        Ok(())
    }

    pub fn gamma<T: Scalar>(&self) -> T {
        lit(self.gamma)
    }

    /// Weight of the information term `−Ĥ`.
    pub fn info_weight<T: Scalar>(&self) -> T {
        match self.variant {
            RewardVariant::Entropy => lit(self.lambda),
            RewardVariant::SafeLocalization(_) => T::one(),
        }
    }

    /// The part of the reward that needs no entropy evaluation.
    pub fn exact_part<T: Scalar>(&self, input: &BoundsInput<'_, T>) -> T {
        match &self.variant {
            RewardVariant::Entropy => {
                let b = match self.reward_on {
                    RewardOn::Prior => input.prev,
                    RewardOn::Posterior => input.post,
                };
                (T::one() - lit(self.lambda)) * expected_state_reward(b, input.action, &self.state_reward)
            }
            RewardVariant::SafeLocalization(s) => safety_reward(input.post, s),
        }
    }
}

/// Weighted mean `Σ w_i r(x_i)`.
pub fn expected_state_reward<T: Scalar>(belief: &WeightedParticleBelief<T>, _action: &Action<T>, r: &StateReward) -> T {
    compensated_sum((0..belief.len()).map(|i| belief.weight(i) * r.eval(belief.state(i))))
}

/// `safety_weight · (2·1{P(safe) ≥ δ} − 1)`.
pub fn safety_reward<T: Scalar>(belief: &WeightedParticleBelief<T>, safety: &SafetySpec) -> T {
    let mass = belief.mass_where(|x| safety.region.contains(x));
    let w: T = lit(safety.safety_weight);
    if mass >= lit(safety.delta) {
        w
    } else {
        -w
    }
}

/// Expected payoff of a terminal action.
pub fn terminal_reward<T: Scalar>(belief: &WeightedParticleBelief<T>, terminal: &TerminalReward) -> T {
    let r2 = lit::<T>(terminal.radius * terminal.radius);
    let inside = belief.mass_where(|x| {
        terminal.goal.iter().zip(x).fold(T::zero(), |acc, (&g, &xk)| acc + (xk - lit::<T>(g)) * (xk - lit::<T>(g))) <= r2
    });
    inside * lit(terminal.inside) + (T::one() - inside) * lit(terminal.outside)
}

/// Exact reward of the edge `(b, a, z, b')` using the full Boers estimator.
pub fn composite_reward<T: Scalar>(input: &BoundsInput<'_, T>, settings: &RewardSpec, calls: &mut ModelCalls) -> Result<T> {
    let exact = settings.exact_part(input);
    let w: T = settings.info_weight();
    if w == T::zero() {
        return Ok(exact);
    }
    let h = boers_entropy(input, calls)?;
    Ok(exact + w * (-h))
}

/// Bounds `ρ̲ ≤ ρ ≤ ρ̄` of a reward; exact rewards carry no entropy state.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardInterval<T> {
    lower: T,
    upper: T,
    exact_part: T,
    info_weight: T,
    level: usize,
    particles: usize,
    entropy: Option<EntropyBoundsState<T>>,
}

impl<T: Scalar> RewardInterval<T> {
    /// A degenerate interval at a known value, reported at `level` with `particles` particles.
    pub fn exact(value: T, level: usize, particles: usize) -> Self {
        Self { lower: value, upper: value, exact_part: value, info_weight: T::zero(), level, particles, entropy: None }
    }

    /// An interval with hand-set endpoints; promotion is impossible.
    pub fn fixed(lower: T, upper: T, level: usize, particles: usize) -> Self {
        Self { lower, upper, exact_part: lower, info_weight: T::zero(), level, particles, entropy: None }
    }

    fn from_state(exact_part: T, info_weight: T, state: EntropyBoundsState<T>) -> Self {
        let mut r = Self {
            lower: T::zero(),
            upper: T::zero(),
            exact_part,
            info_weight,
            level: state.level(),
            particles: state.particles(),
            entropy: Some(state),
        };
        r.sync();
        r
    }

    fn sync(&mut self) {
        if let Some(st) = &self.entropy {
            self.lower = self.exact_part + self.info_weight * st.lower();
            self.upper = self.exact_part + self.info_weight * st.upper();
            self.level = st.level();
            self.particles = st.particles();
        }
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn gap(&self) -> T {
        self.upper - self.lower
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Particles used by the bounds at the current level.
    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn entropy_state(&self) -> Option<&EntropyBoundsState<T>> {
        self.entropy.as_ref()
    }

    /// Whether another promotion is possible.
    pub fn can_promote(&self) -> bool {
        self.entropy.as_ref().is_some_and(|s| !s.is_exact())
    }

    /// Promotes one level. Returns `false` when the interval is already exact.
    pub fn promote(
        &mut self,
        input: &BoundsInput<'_, T>,
        next_prev: &SimplificationIndexSet<'_>,
        next_post: &SimplificationIndexSet<'_>,
        calls: &mut ModelCalls,
    ) -> Result<bool> {
        let Some(state) = self.entropy.as_mut() else { return Ok(false) };
        if state.is_exact() {
            return Ok(false);
        }
        state.promote(input, next_prev, next_post, calls)?;
        self.sync();
        Ok(true)
    }
}

/// Reward bounds at the level of the given index sets.
pub fn composite_reward_bounds<T: Scalar>(
    input: &BoundsInput<'_, T>,
    index_prev: &SimplificationIndexSet<'_>,
    index_post: &SimplificationIndexSet<'_>,
    settings: &RewardSpec,
    m: T,
    calls: &mut ModelCalls,
) -> Result<RewardInterval<T>> {
    let exact = settings.exact_part(input);
    let w: T = settings.info_weight();
    if w == T::zero() {
        let n_max = index_prev.chain().n_max();
        return Ok(RewardInterval::exact(exact, n_max, input.prev.len()));
    }
    let state = entropy_bounds_at_level(input, index_prev, index_post, m, calls)?;
    Ok(RewardInterval::from_state(exact, w, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], ws: &[f64]) -> WeightedParticleBelief<f64> {
        WeightedParticleBelief::new(1, xs.to_vec(), ws.to_vec()).unwrap()
    }

    fn stay() -> Action<f64> {
        Action::new(0, "stay", vec![0.0])
    }

    #[test]
    fn constant_reward_is_its_value() {
        let b = line(&[0.0, 1.0, 5.0], &[0.2, 0.3, 0.5]);
        assert!((expected_state_reward(&b, &stay(), &StateReward::Constant { value: 2.5 }) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_of_state_reward() {
        let b = line(&[1.0, 3.0], &[0.5, 0.5]);
        let r = StateReward::NegSquaredDistance { goal: vec![2.0] };
        assert_eq!(expected_state_reward(&b, &stay(), &r), -1.0);
        let b = line(&[-1.0, 3.0], &[0.5, 0.5]);
        let r = StateReward::NegDistance { goal: vec![0.0] };
        assert_eq!(expected_state_reward(&b, &stay(), &r), -2.0);
    }

    #[test]
    fn agent_target_reward_zero_when_coincident() {
        assert_eq!(StateReward::NegAgentTargetSquaredDistance.eval(&[1.0, 2.0, 1.0, 2.0]), 0.0);
    }

    #[test]
    fn safety_threshold_is_inclusive() {
        let region = SafeRegion::HalfPlane { normal: vec![1.0], offset: 0.5 };
        let settings = SafetySpec { region, delta: 0.9, safety_weight: 10.0 };
        assert_eq!(safety_reward(&line(&[0.0, 0.1], &[0.5, 0.5]), &settings), 10.0);
        assert_eq!(safety_reward(&line(&[1.0, 2.0], &[0.5, 0.5]), &settings), -10.0);
        assert_eq!(safety_reward(&line(&[0.0, 1.0], &[0.85, 0.15]), &settings), -10.0);
        assert_eq!(safety_reward(&line(&[0.0, 1.0], &[0.9, 0.1]), &settings), 10.0);
    }

    #[test]
    fn disks_are_unsafe_inside() {
        let region = SafeRegion::OutsideDisks { centers: vec![vec![0.0, 0.0]], radius: 1.0 };
        assert!(!region.contains(&[0.5, 0.0]));
        assert!(region.contains(&[1.5, 0.0]));
    }

    #[test]
    fn terminal_reward_mixes_by_mass() {
        let t = TerminalReward { goal: vec![0.0, 0.0], radius: 0.5, inside: 200.0, outside: -200.0 };
        let b = WeightedParticleBelief::<f64>::new(2, vec![0.1, 0.1, 3.0, 0.0], vec![0.75, 0.25]).unwrap();
        assert!((terminal_reward(&b, &t) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn reward_settings_validation() {
        assert!(RewardSpec::entropy(1.5, 0.9, StateReward::Zero).validate().is_err());
        assert!(RewardSpec::entropy(0.5, 0.0, StateReward::Zero).validate().is_err());
        assert!(RewardSpec::entropy(0.5, 1.0, StateReward::Zero).validate().is_ok());
    }

    #[test]
    fn fixed_interval_cannot_promote() {
        let r = RewardInterval::fixed(-1.0, 2.0, 1, 5);
        assert_eq!(r.gap(), 3.0);
        assert!(!r.can_promote());
    }
}
