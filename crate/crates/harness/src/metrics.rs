//! Speedup metrics.

use crate::{HarnessError, Result};

/// Share of pairwise motion-model work avoided, in percent:
/// `Σ(n_x² − n^s·n_x) / Σ n_x² · 100` over the given per-node particle counts.
///
/// Returns 0 when there are no nodes.
pub fn particle_speedup(n_x: usize, particles: impl IntoIterator<Item = usize>) -> f64 {
    let full = (n_x * n_x) as f64;
    let (mut saved, mut total) = (0.0, 0.0);
    for p in particles {
        saved += full - (p * n_x) as f64;
        total += full;
    }
    if total == 0.0 {
        0.0
    } else {
        saved / total * 100.0
    }
}

/// `(t_base − t_ours) / t_base · 100`.
pub fn time_speedup(baseline: f64, ours: f64) -> Result<f64> {
    if !(baseline > 0.0 && ours > 0.0) {
        return Err(HarnessError::InvalidInput(format!("times must be positive, got {baseline} and {ours}")));
    }
    Ok((baseline - ours) / baseline * 100.0)
}
