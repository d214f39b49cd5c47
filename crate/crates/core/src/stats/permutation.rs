//! Two-sided paired permutation (sign-flip) test on the mean difference.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::StatsError;

/// Up to this many pairs all `2^n` sign assignments are enumerated.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationResult {
    pub n_pairs: usize,
    /// Mean of `b - a`.
    pub mean_difference: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Tests whether paired values `a` and `b` differ in mean.
///
/// Under the null hypothesis each paired difference is equally likely to carry either
/// sign. Small samples are enumerated exactly; larger ones use `resamples` seeded
/// random sign flips with the `(count + 1) / (resamples + 1)` estimator.
pub fn paired_permutation_test(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<PermutationResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len();
    let observed: f64 = diffs.iter().sum::<f64>().abs();
    let tol = 1e-12 * (1.0 + observed);
    let (p_value, exact) = if n <= EXACT_LIMIT {
        let total = 1u64 << n;
        let extreme = (0..total)
            .filter(|mask| {
                let s: f64 = diffs
                    .iter()
                    .enumerate()
                    .map(|(i, d)| if mask >> i & 1 == 1 { -d } else { *d })
                    .sum();
                s.abs() >= observed - tol
            })
            .count();
        (extreme as f64 / total as f64, true)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extreme = (0..resamples)
            .filter(|_| {
                let s: f64 = diffs
                    .iter()
                    .map(|d| if rng.random::<bool>() { -d } else { *d })
                    .sum();
                s.abs() >= observed - tol
            })
            .count();
        ((extreme + 1) as f64 / (resamples + 1) as f64, false)
    };
    Ok(PermutationResult {
        n_pairs: n,
        mean_difference: diffs.iter().sum::<f64>() / n as f64,
        p_value,
        exact,
    })
}
