//! Sample-order permutation test shared by both detectors.

use rand::seq::SliceRandom;

use crate::exec::Execution;
use crate::rng::stream;

/// Permutations evaluated between early-stopping checks.
const BATCH: usize = 16;

/// Decide whether `observed` is significant against the distribution of
/// `statistic` under random reorderings of `0..n`.
///
/// Permutation `j` is drawn from stream `j` of `seed`, so the outcome does
/// not depend on how batches are scheduled. The p-value is
/// `(1 + #{perm ≥ observed}) / (1 + permutations)`; as soon as enough
/// permutations reach the observed value to rule out `p ≤ alpha`, the test
/// stops and returns `None`.
pub(crate) fn permutation_p_value<F>(
    n: usize,
    observed: f64,
    statistic: F,
    permutations: usize,
    alpha: f64,
    seed: u64,
    exec: Execution,
) -> Option<f64>
where
    F: Fn(&[usize]) -> f64 + Sync + Send,
{
    // p ≤ α  ⇔  exceed ≤ α (1 + B) − 1.
    let budget = alpha * (1 + permutations) as f64 - 1.0;
    if budget < 0.0 {
        return None;
    }
    let mut exceed = 0usize;
    let mut done = 0usize;
    while done < permutations {
        let batch = BATCH.min(permutations - done);
        let hits = exec.map(batch, |i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut stream(seed, (done + i) as u64));
            // Ties count against significance.
            statistic(&order) >= observed * (1.0 - 1e-12)
        });
        exceed += hits.into_iter().filter(|h| *h).count();
        done += batch;
        if exceed as f64 > budget {
            return None;
        }
    }
    Some((1 + exceed) as f64 / (1 + permutations) as f64)
}

/// Candidate split positions `lo..=hi` visited by the coarse scan.
pub(crate) fn split_grid(n: usize, min_segment: usize, max_candidates: usize) -> (Vec<usize>, usize) {
    let lo = min_segment;
    let hi = n - min_segment;
    let span = hi - lo + 1;
    let step = span.div_ceil(max_candidates).max(1);
    ((lo..=hi).step_by(step).collect(), step)
}
