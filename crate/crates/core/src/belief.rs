//! Weighted particle beliefs and the nested index sets that define simplification levels.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{compensated_sum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("every particle weight is zero")]
    AllWeightsZero,
    #[error("a belief needs at least one particle")]
    Empty,
    #[error("state dimension must be positive")]
    ZeroDimension,
    #[error("state buffer of length {len} does not hold whole states of dimension {dim}")]
    DimensionMismatch { len: usize, dim: usize },
    #[error("{states} states but {weights} weights")]
    CountMismatch { states: usize, weights: usize },
    #[error("weight {index} is negative or not finite")]
    InvalidWeight { index: usize },
    #[error("invalid simplification schedule: {0}")]
    InvalidSchedule(String),
    #[error("level {level} outside 1..={n_max}")]
    LevelOutOfRange { level: usize, n_max: usize },
}

pub type Result<T> = std::result::Result<T, BeliefError>;

/// Particle belief `{(x_i, w_i)}`; weights are kept unnormalized next to their cached sum.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedParticleBelief<T> {
    dim: usize,
    states: Vec<T>,
    weights: Vec<T>,
    normalizer: T,
}

impl<T: Scalar> WeightedParticleBelief<T> {
    /// Builds a belief from a row-major state buffer and raw weights.
    pub fn new(dim: usize, states: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(BeliefError::ZeroDimension);
        }
        if !states.len().is_multiple_of(dim) {
            return Err(BeliefError::DimensionMismatch { len: states.len(), dim });
        }
        let n = states.len() / dim;
        if n == 0 {
            return Err(BeliefError::Empty);
        }
        if weights.len() != n {
            return Err(BeliefError::CountMismatch { states: n, weights: weights.len() });
        }
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w >= T::zero())) {
            return Err(BeliefError::InvalidWeight { index });
        }
        let normalizer = compensated_sum(weights.iter().copied());
        Ok(Self { dim, states, weights, normalizer })
    }

    /// Equally weighted particles.
    pub fn uniform(dim: usize, states: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(BeliefError::ZeroDimension);
        }
        let n = states.len() / dim;
        let w = if n == 0 { T::zero() } else { T::one() / T::from_usize(n).unwrap() };
        let mut b = Self::new(dim, states, vec![w; n])?;
        b.normalizer = T::one();
        Ok(b)
    }

    pub(crate) fn from_normalized_parts(dim: usize, states: Vec<T>, weights: Vec<T>) -> Self {
        Self { dim, states, weights, normalizer: T::one() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn raw_weights(&self) -> &[T] {
        &self.weights
    }

    pub fn normalizer(&self) -> T {
        self.normalizer
    }

    /// Normalized weight of particle `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> T {
        self.weights[i] / self.normalizer
    }

    pub fn normalized_weights(&self) -> Vec<T> {
        self.weights.iter().map(|&w| w / self.normalizer).collect()
    }

    /// Weighted mean state.
    pub fn mean(&self) -> Vec<T> {
        (0..self.dim)
            .map(|k| compensated_sum((0..self.len()).map(|i| self.weight(i) * self.state(i)[k])))
            .collect()
    }

    /// Weighted per-axis variance.
    pub fn axis_variance(&self) -> Vec<T> {
        let mean = self.mean();
        (0..self.dim)
            .map(|k| {
                compensated_sum((0..self.len()).map(|i| {
                    let d = self.state(i)[k] - mean[k];
                    self.weight(i) * d * d
                }))
            })
            .collect()
    }

    /// Weighted mass of the particles satisfying `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(&[T]) -> bool) -> T {
        compensated_sum((0..self.len()).filter(|&i| pred(self.state(i))).map(|i| self.weight(i)))
    }
}

/// Rescales weights to sum to one.
pub fn normalize_weights<T: Scalar>(belief: &WeightedParticleBelief<T>) -> Result<WeightedParticleBelief<T>> {
    if belief.normalizer <= T::zero() {
        return Err(BeliefError::AllWeightsZero);
    }
    let weights = belief.weights.iter().map(|&w| w / belief.normalizer).collect();
    Ok(WeightedParticleBelief::from_normalized_parts(belief.dim, belief.states.clone(), weights))
}

/// Particle counts per simplification level, `level_sizes[n_max - 1] == n_x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplificationSchedule {
    level_sizes: Vec<usize>,
}

impl SimplificationSchedule {
    pub fn new(level_sizes: Vec<usize>) -> Result<Self> {
        if level_sizes.is_empty() {
            return Err(BeliefError::InvalidSchedule("no levels".into()));
        }
        if level_sizes[0] == 0 {
            return Err(BeliefError::InvalidSchedule("first level is empty".into()));
        }
        if level_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BeliefError::InvalidSchedule(format!("sizes {level_sizes:?} not strictly increasing")));
        }
        Ok(Self { level_sizes })
    }

    /// `n_max` equally spaced levels, `ceil(s * n_x / n_max)` particles at level `s`.
    pub fn uniform(n_x: usize, n_max: usize) -> Result<Self> {
        if n_max == 0 || n_x < n_max {
            return Err(BeliefError::InvalidSchedule(format!("{n_max} levels do not fit {n_x} particles")));
        }
        Self::new((1..=n_max).map(|s| (s * n_x).div_ceil(n_max)).collect())
    }

    pub fn n_max(&self) -> usize {
        self.level_sizes.len()
    }

    pub fn n_x(&self) -> usize {
        *self.level_sizes.last().unwrap()
    }

    pub fn level_sizes(&self) -> &[usize] {
        &self.level_sizes
    }

    /// Particle count at 1-based `level`.
    pub fn size(&self, level: usize) -> usize {
        self.level_sizes[level - 1]
    }

    pub fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.n_max() {
            Err(BeliefError::LevelOutOfRange { level, n_max: self.n_max() })
        } else {
            Ok(())
        }
    }
}

/// Random ordering of particle indices; level `s` uses the first `level_sizes[s]` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexChain {
    order: Vec<usize>,
    schedule: SimplificationSchedule,
}

impl IndexChain {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn schedule(&self) -> &SimplificationSchedule {
        &self.schedule
    }

    pub fn n_max(&self) -> usize {
        self.schedule.n_max()
    }

    pub fn level(&self, level: usize) -> Result<SimplificationIndexSet<'_>> {
        self.schedule.check_level(level)?;
        Ok(SimplificationIndexSet { chain: self, level })
    }

    pub fn sets(&self) -> Vec<SimplificationIndexSet<'_>> {
        (1..=self.n_max()).map(|level| SimplificationIndexSet { chain: self, level }).collect()
    }
}

/// View of one level of an [`IndexChain`].
#[derive(Debug, Clone, Copy)]
pub struct SimplificationIndexSet<'a> {
    chain: &'a IndexChain,
    level: usize,
}

impl<'a> SimplificationIndexSet<'a> {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn indices(&self) -> &'a [usize] {
        &self.chain.order[..self.chain.schedule.size(self.level)]
    }

    pub fn len(&self) -> usize {
        self.chain.schedule.size(self.level)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn chain(&self) -> &'a IndexChain {
        self.chain
    }

    /// The next level of the same chain, if any.
    pub fn next(&self) -> Option<SimplificationIndexSet<'a>> {
        (self.level < self.chain.n_max()).then(|| SimplificationIndexSet { chain: self.chain, level: self.level + 1 })
    }
}

/// Draws a nested chain of index sets uniformly without replacement.
pub fn make_index_chain<R: Rng + ?Sized>(n_x: usize, schedule: &SimplificationSchedule, rng: &mut R) -> Result<IndexChain> {
    if schedule.n_x() != n_x {
        return Err(BeliefError::InvalidSchedule(format!(
            "schedule ends at {} particles, belief has {n_x}",
            schedule.n_x()
        )));
    }
    let mut order: Vec<usize> = (0..n_x).collect();
    order.shuffle(rng);
    Ok(IndexChain { order, schedule: schedule.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn belief(w: &[f64]) -> WeightedParticleBelief<f64> {
        WeightedParticleBelief::new(1, (0..w.len()).map(|i| i as f64).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn normalizes_equal_weights() {
        let b = normalize_weights(&belief(&[2.0, 2.0])).unwrap();
        assert_eq!(b.raw_weights(), &[0.5, 0.5]);
    }

    #[test]
    fn normalization_preserves_ratios() {
        let b = normalize_weights(&belief(&[1.0, 0.0, 3.0])).unwrap();
        assert_eq!(b.raw_weights(), &[0.25, 0.0, 0.75]);
    }

    #[test]
    fn zero_weights_rejected() {
        assert_eq!(normalize_weights(&belief(&[0.0, 0.0])), Err(BeliefError::AllWeightsZero));
    }

    #[test]
    fn normalization_is_idempotent() {
        let once = normalize_weights(&belief(&[0.3, 0.7, 1.1])).unwrap();
        let twice = normalize_weights(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn malformed_beliefs_rejected() {
        assert_eq!(WeightedParticleBelief::<f64>::new(2, vec![1.0; 3], vec![1.0]).unwrap_err(),
            BeliefError::DimensionMismatch { len: 3, dim: 2 });
        assert_eq!(WeightedParticleBelief::<f64>::new(1, vec![], vec![]).unwrap_err(), BeliefError::Empty);
        assert_eq!(WeightedParticleBelief::new(1, vec![0.0], vec![-1.0]).unwrap_err(),
            BeliefError::InvalidWeight { index: 0 });
    }

    #[test]
    fn top_level_holds_every_index() {
        let sched = SimplificationSchedule::new(vec![2, 4]).unwrap();
        let chain = make_index_chain(4, &sched, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let sets = chain.sets();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].len(), 2);
        assert!(sets[0].indices().iter().all(|i| sets[1].indices().contains(i)));
        let mut top = sets[1].indices().to_vec();
        top.sort();
        assert_eq!(top, vec![0, 1, 2, 3]);
    }

    #[test]
    fn default_schedule_matches_tenths() {
        let sched = SimplificationSchedule::uniform(100, 10).unwrap();
        assert_eq!(sched.level_sizes(), &[10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
        let chain = make_index_chain(100, &sched, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (s, set) in chain.sets().iter().enumerate() {
            assert_eq!(set.len(), 10 * (s + 1));
        }
        assert_eq!(SimplificationSchedule::uniform(50, 10).unwrap().size(1), 5);
        assert_eq!(SimplificationSchedule::uniform(15, 10).unwrap().level_sizes(), &[2, 3, 5, 6, 8, 9, 11, 12, 14, 15]);
    }

    #[test]
    fn chains_are_seed_deterministic() {
        let sched = SimplificationSchedule::uniform(30, 5).unwrap();
        let a = make_index_chain(30, &sched, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = make_index_chain(30, &sched, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(SimplificationSchedule::new(vec![2, 2]).is_err());
        assert!(SimplificationSchedule::new(vec![0, 2]).is_err());
        assert!(SimplificationSchedule::uniform(5, 10).is_err());
        let sched = SimplificationSchedule::new(vec![1, 3]).unwrap();
        assert!(make_index_chain(4, &sched, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(sched.check_level(0).is_err());
        assert!(sched.check_level(3).is_err());
    }
}
