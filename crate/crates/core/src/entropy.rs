//! Boers differential-entropy estimator and its adaptive lower/upper bounds.
//!
//! Both bounds are stated on the information term `-Ĥ`. The bound state caches per-row partial
//! mixtures so that promoting a level only evaluates the kernel entries it has not seen yet.

use thiserror::Error;

use crate::belief::{BeliefError, SimplificationIndexSet, WeightedParticleBelief};
use crate::models::{Action, ModelCalls, ModelError, ObservationModel, TransitionModel};
use crate::scalar::{compensated_sum, floor_log, log_sum_exp, NeumaierSum, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EntropyError {
    #[error("prior has {prev} particles, posterior {post}")]
    ParticleCountMismatch { prev: usize, post: usize },
    #[error("index sets disagree: {0}")]
    IndexMismatch(String),
    #[error("log argument is not a positive number")]
    NonpositiveLikelihood,
    #[error("bounds are already at the finest level")]
    AlreadyAtMaxLevel,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

pub type Result<T> = std::result::Result<T, EntropyError>;

/// Everything a single reward edge `(b, a, z, b')` needs.
#[derive(Clone, Copy)]
pub struct BoundsInput<'a, T: Scalar> {
    pub prev: &'a WeightedParticleBelief<T>,
    pub action: &'a Action<T>,
    pub observation: &'a [T],
    pub post: &'a WeightedParticleBelief<T>,
    pub transition: &'a dyn TransitionModel<T>,
    pub obs: &'a dyn ObservationModel<T>,
}

impl<T: Scalar> BoundsInput<'_, T> {
    fn check(&self) -> Result<usize> {
        let (prev, post) = (self.prev.len(), self.post.len());
        if prev != post {
            return Err(EntropyError::ParticleCountMismatch { prev, post });
        }
        Ok(prev)
    }

    #[inline]
    fn kernel(&self, i: usize, j: usize, w_prev: &[T], calls: &mut ModelCalls) -> T {
        calls.motion += 1;
        self.transition.density(self.post.state(i), self.prev.state(j), self.action) * w_prev[j]
    }

    /// Observation log-likelihoods of the posterior particles and the floored `ln Σ p_Z w`.
    fn likelihood_terms(&self, w_prev: &[T], calls: &mut ModelCalls) -> Result<(Vec<T>, T)> {
        let n = self.post.len();
        calls.observation += n as u64;
        let log_pz: Vec<T> = (0..n).map(|i| self.obs.log_density(self.observation, self.post.state(i))).collect();
        let joint: Vec<T> = log_pz.iter().zip(w_prev).map(|(&l, &w)| l + w.ln()).collect();
        let first = floor_log(log_sum_exp(&joint));
        if first.is_nan() || log_pz.iter().any(|v| v.is_nan()) {
            return Err(EntropyError::NonpositiveLikelihood);
        }
        Ok((log_pz, first))
    }
}

/// `Σ_i w'_i · floor(ln p_Z,i + ln mix_i)` with compensated summation.
fn weighted_log_terms<T: Scalar>(w_post: &[T], mut term: impl FnMut(usize) -> T) -> Result<T> {
    let mut acc = NeumaierSum::new();
    for (i, &w) in w_post.iter().enumerate() {
        // Every row is evaluated so the cost does not depend on the weights.
        let t = floor_log(term(i));
        if w > T::zero() {
            if t.is_nan() {
                return Err(EntropyError::NonpositiveLikelihood);
            }
            acc.add(w * t);
        }
    }
    Ok(acc.value())
}

/// Boers estimate `Ĥ` of the differential entropy of the posterior belief.
///
/// Costs `n_x` observation and `n_x²` motion evaluations.
pub fn boers_entropy<T: Scalar>(input: &BoundsInput<'_, T>, calls: &mut ModelCalls) -> Result<T> {
    let n = input.check()?;
    let w_prev = input.prev.normalized_weights();
    let w_post = input.post.normalized_weights();
    let (log_pz, first) = input.likelihood_terms(&w_prev, calls)?;
    let second = weighted_log_terms(&w_post, |i| {
        let mut mix = NeumaierSum::new();
        for j in 0..n {
            mix.add(input.kernel(i, j, &w_prev, calls));
        }
        log_pz[i] + mix.value().ln()
    })?;
    Ok(first - second)
}

/// Cached partial sums behind an [`EntropyBoundsState`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTermCache<T> {
    /// `ln p_Z(z | x'_i)`.
    pub log_pz: Vec<T>,
    /// Floored `ln Σ_i p_Z(z | x'_i) w_i`.
    pub first_term: T,
    /// Running column-restricted mixture of each row not yet fully covered.
    prior_mix: Vec<NeumaierSum<T>>,
    /// For covered rows: the column-restricted mixture at every level from coverage onwards.
    covered: Vec<Option<Vec<T>>>,
    col_order: Vec<usize>,
    row_order: Vec<usize>,
    sizes: Vec<usize>,
    log_m: T,
}

impl<T: Scalar> EntropyTermCache<T> {
    pub fn is_covered(&self, row: usize) -> bool {
        self.covered[row].is_some()
    }

    /// Column-restricted mixture of `row` at `level`.
    pub fn restricted_mixture(&self, row: usize, level: usize) -> T {
        match &self.covered[row] {
            Some(snaps) => snaps[level - 1],
            None => self.prior_mix[row].value(),
        }
    }

    /// Full mixture of a covered row.
    pub fn full_mixture(&self, row: usize) -> Option<T> {
        self.covered[row].as_ref().map(|s| *s.last().unwrap())
    }
}

/// Lower and upper bounds on `-Ĥ` at one simplification level.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyBoundsState<T> {
    level: usize,
    lower: T,
    upper: T,
    cache: EntropyTermCache<T>,
}

fn check_sets(a: &SimplificationIndexSet<'_>, b: &SimplificationIndexSet<'_>, n: usize) -> Result<()> {
    if a.level() != b.level() {
        return Err(EntropyError::IndexMismatch(format!("levels {} and {}", a.level(), b.level())));
    }
    if a.chain().schedule() != b.chain().schedule() {
        return Err(EntropyError::IndexMismatch("different schedules".into()));
    }
    if a.chain().order().len() != n {
        return Err(EntropyError::IndexMismatch(format!("chains cover {} particles, beliefs {n}", a.chain().order().len())));
    }
    Ok(())
}

impl<T: Scalar> EntropyBoundsState<T> {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn n_max(&self) -> usize {
        self.cache.sizes.len()
    }

    /// Lower bound on `-Ĥ`.
    pub fn lower(&self) -> T {
        self.lower
    }

    /// Upper bound on `-Ĥ`.
    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn gap(&self) -> T {
        self.upper - self.lower
    }

    pub fn is_exact(&self) -> bool {
        self.level == self.n_max()
    }

    pub fn cache(&self) -> &EntropyTermCache<T> {
        &self.cache
    }

    /// Particles used at the current level.
    pub fn particles(&self) -> usize {
        self.cache.sizes[self.level - 1]
    }

    /// Accumulates the rest of a newly covered row and snapshots it at every level boundary.
    fn cover_row(&mut self, input: &BoundsInput<'_, T>, w_prev: &[T], row: usize, calls: &mut ModelCalls) {
        let c = &mut self.cache;
        let n_max = c.sizes.len();
        let mut acc = c.prior_mix[row];
        let mut snaps = vec![T::zero(); n_max];
        snaps[self.level - 1] = acc.value();
        for l in self.level + 1..=n_max {
            for &j in &c.col_order[c.sizes[l - 2]..c.sizes[l - 1]] {
                acc.add(input.kernel(row, j, w_prev, calls));
            }
            snaps[l - 1] = acc.value();
        }
        c.covered[row] = Some(snaps);
    }

    fn refresh(&mut self, input: &BoundsInput<'_, T>) -> Result<()> {
        let w_post = input.post.normalized_weights();
        let c = &self.cache;
        let level = self.level;
        let lower = weighted_log_terms(&w_post, |i| c.log_pz[i] + c.restricted_mixture(i, level).ln())?;
        let upper = weighted_log_terms(&w_post, |i| {
            c.log_pz[i] + c.full_mixture(i).map_or(c.log_m, |f| f.ln())
        })?;
        self.lower = lower - c.first_term;
        self.upper = upper - c.first_term;
        Ok(())
    }

    fn check_continuation(&self, next_prev: &SimplificationIndexSet<'_>, next_post: &SimplificationIndexSet<'_>) -> Result<()> {
        if self.level == self.n_max() {
            return Err(EntropyError::AlreadyAtMaxLevel);
        }
        if next_prev.level() != self.level + 1 || next_post.level() != self.level + 1 {
            return Err(EntropyError::IndexMismatch(format!(
                "expected level {}, got {} and {}",
                self.level + 1,
                next_prev.level(),
                next_post.level()
            )));
        }
        if next_prev.chain().order() != self.cache.col_order.as_slice()
            || next_post.chain().order() != self.cache.row_order.as_slice()
        {
            return Err(EntropyError::IndexMismatch("index sets do not extend the cached ones".into()));
        }
        Ok(())
    }

    /// Promotes one level, evaluating only the newly required kernel entries.
    pub fn promote(
        &mut self,
        input: &BoundsInput<'_, T>,
        next_prev: &SimplificationIndexSet<'_>,
        next_post: &SimplificationIndexSet<'_>,
        calls: &mut ModelCalls,
    ) -> Result<()> {
        input.check()?;
        self.check_continuation(next_prev, next_post)?;
        let w_prev = input.prev.normalized_weights();
        let (lo, hi) = (self.cache.sizes[self.level - 1], self.cache.sizes[self.level]);
        let new_rows: Vec<usize> = self.cache.row_order[lo..hi].to_vec();
        let new_cols: Vec<usize> = self.cache.col_order[lo..hi].to_vec();
        for &row in &new_rows {
            self.cover_row(input, &w_prev, row, calls);
        }
        for row in 0..input.post.len() {
            if !self.cache.is_covered(row) {
                let mut acc = self.cache.prior_mix[row];
                for &j in &new_cols {
                    acc.add(input.kernel(row, j, &w_prev, calls));
                }
                self.cache.prior_mix[row] = acc;
            }
        }
        self.level += 1;
        self.refresh(input)
    }
}

/// Bounds on `-Ĥ` computed from scratch at the level of the given index sets.
///
/// Columns (prior particles) come from `index_prev`, fully mixed rows (posterior particles) from
/// `index_post`. Costs `n_x` observation and `2·n^s·n_x − (n^s)²` motion evaluations.
pub fn entropy_bounds_at_level<T: Scalar>(
    input: &BoundsInput<'_, T>,
    index_prev: &SimplificationIndexSet<'_>,
    index_post: &SimplificationIndexSet<'_>,
    m: T,
    calls: &mut ModelCalls,
) -> Result<EntropyBoundsState<T>> {
    let n = input.check()?;
    check_sets(index_prev, index_post, n)?;
    if !(m > T::zero() && m.is_finite()) {
        return Err(EntropyError::Model(ModelError::UnboundedDensity));
    }
    let w_prev = input.prev.normalized_weights();
    let (log_pz, first_term) = input.likelihood_terms(&w_prev, calls)?;
    let cols = index_prev.indices();
    let prior_mix = (0..n)
        .map(|i| {
            let mut acc = NeumaierSum::new();
            for &j in cols {
                acc.add(input.kernel(i, j, &w_prev, calls));
            }
            acc
        })
        .collect();
    let mut state = EntropyBoundsState {
        level: index_prev.level(),
        lower: T::zero(),
        upper: T::zero(),
        cache: EntropyTermCache {
            log_pz,
            first_term,
            prior_mix,
            covered: vec![None; n],
            col_order: index_prev.chain().order().to_vec(),
            row_order: index_post.chain().order().to_vec(),
            sizes: index_prev.chain().schedule().level_sizes().to_vec(),
            log_m: m.ln(),
        },
    };
    for &row in index_post.indices() {
        state.cover_row(input, &w_prev, row, calls);
    }
    state.refresh(input)?;
    Ok(state)
}

/// Functional form of [`EntropyBoundsState::promote`].
pub fn promote_entropy_bounds<T: Scalar>(
    mut state: EntropyBoundsState<T>,
    input: &BoundsInput<'_, T>,
    next_prev: &SimplificationIndexSet<'_>,
    next_post: &SimplificationIndexSet<'_>,
    calls: &mut ModelCalls,
) -> Result<EntropyBoundsState<T>> {
    state.promote(input, next_prev, next_post, calls)?;
    Ok(state)
}

/// Motion evaluations needed to compute bounds from scratch with `n_s` of `n_x` particles.
pub fn motion_calls_at(n_s: usize, n_x: usize) -> u64 {
    (2 * n_s * n_x - n_s * n_s) as u64
}

/// Shannon entropy of the weight vector.
pub fn discrete_weight_entropy<T: Scalar>(belief: &WeightedParticleBelief<T>) -> T {
    -compensated_sum(
        belief
            .normalized_weights()
            .into_iter()
            .filter(|&w| w > T::zero())
            .map(|w| w * w.ln()),
    )
}
