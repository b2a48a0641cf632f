//! Dirichlet likelihood-ratio changepoints.
//!
//! For a split of `n` samples at `τ` the score is
//!
//! ```text
//! Λ(τ) = τ ℓ̂(m̄_{<τ}) + (n − τ) ℓ̂(m̄_{≥τ}) − n ℓ̂(m̄)
//! ```
//!
//! where `ℓ̂(m̄)` is the maximised per-sample Dirichlet log-likelihood for mean
//! log vector `m̄` (see [`super::dirichlet`]). Prefix sums of `ln x` make every
//! side's sufficient statistic `O(d)`, and each side's Newton solve starts from
//! the neighbouring split's solution.

use rand::Rng;

use super::dirichlet::{fit_mean_log, moment_start, GRADIENT_TOL};
use super::permutation::{permutation_p_value, split_grid};
use super::{check_input, ChangeStatistic, CompositionalSample, DetectionReport, DetectorConfig};
use crate::error::Result;
use crate::rng::SimRng;

/// Splits scored per scan; longer inputs are scanned on a regular grid and the
/// winner refined locally.
const MAX_CANDIDATES: usize = 100;

/// Log-transformed samples, row-major.
pub(crate) struct LogSamples {
    d: usize,
    logs: Vec<f64>,
    raw: Vec<f64>,
}

impl LogSamples {
    pub(crate) fn new(samples: &[CompositionalSample]) -> Self {
        let d = samples[0].dim();
        let raw: Vec<f64> = samples.iter().flat_map(|s| s.as_slice().iter().copied()).collect();
        let logs = raw.iter().map(|x| x.ln()).collect();
        LogSamples { d, logs, raw }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.logs[i * self.d..(i + 1) * self.d]
    }

    fn raw_row(&self, i: usize) -> &[f64] {
        &self.raw[i * self.d..(i + 1) * self.d]
    }
}

/// Scanner for one contiguous segment `[lo, hi)`.
struct Segment<'a> {
    data: &'a LogSamples,
    lo: usize,
    n: usize,
    /// Single-fit solution, shared by every ordering of the segment.
    alpha_all: Vec<f64>,
    ll_all: f64,
}

impl<'a> Segment<'a> {
    fn new(data: &'a LogSamples, lo: usize, hi: usize) -> Self {
        let d = data.d;
        let n = hi - lo;
        let mut mean = vec![0.0; d];
        for i in lo..hi {
            for (m, x) in mean.iter_mut().zip(data.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let start = moment_start((lo..hi).map(|i| data.raw_row(i)), d);
        let fit = fit_mean_log(&mean, &start, GRADIENT_TOL);
        Segment { data, lo, n, alpha_all: fit.alpha, ll_all: fit.ll }
    }

    /// `Λ(τ)` at each split in `splits` (ascending), for the segment read in
    /// `order` (relative indices; identity when `None`).
    fn scores(&self, order: Option<&[usize]>, splits: &[usize]) -> Vec<f64> {
        let d = self.data.d;
        let n = self.n;
        let mut cum = vec![0.0; (n + 1) * d];
        for i in 0..n {
            let src = self.lo + order.map_or(i, |o| o[i]);
            let row = self.data.row(src);
            for k in 0..d {
                cum[(i + 1) * d + k] = cum[i * d + k] + row[k];
            }
        }
        let total = &cum[n * d..];
        let mut left_alpha = self.alpha_all.clone();
        let mut right_alpha = self.alpha_all.clone();
        let mut mean_l = vec![0.0; d];
        let mut mean_r = vec![0.0; d];
        let mut out = Vec::with_capacity(splits.len());
        for &tau in splits {
            let at = &cum[tau * d..(tau + 1) * d];
            for k in 0..d {
                mean_l[k] = at[k] / tau as f64;
                mean_r[k] = (total[k] - at[k]) / (n - tau) as f64;
            }
            let left = fit_mean_log(&mean_l, &left_alpha, GRADIENT_TOL);
            let right = fit_mean_log(&mean_r, &right_alpha, GRADIENT_TOL);
            let gain = tau as f64 * left.ll + (n - tau) as f64 * right.ll - n as f64 * self.ll_all;
            out.push(gain.max(0.0));
            left_alpha = left.alpha;
            right_alpha = right.alpha;
        }
        out
    }

    fn max_score(&self, order: Option<&[usize]>, splits: &[usize]) -> (f64, usize) {
        let scores = self.scores(order, splits);
        let mut best = (f64::NEG_INFINITY, splits[0]);
        for (s, &tau) in scores.iter().zip(splits) {
            if *s > best.0 {
                best = (*s, tau);
            }
        }
        best
    }
}

/// `Λ(τ)` for every split `τ ∈ [min_segment, n − min_segment]`.
pub fn split_statistics(samples: &[CompositionalSample], min_segment: usize) -> Result<Vec<(usize, f64)>> {
    let config = DetectorConfig {
        min_segment,
        ..DetectorConfig::default()
    };
    check_input(samples, &config)?;
    let data = LogSamples::new(samples);
    let seg = Segment::new(&data, 0, samples.len());
    let splits: Vec<usize> = (min_segment..=samples.len() - min_segment).collect();
    let scores = seg.scores(None, &splits);
    Ok(splits.into_iter().zip(scores).collect())
}

/// Most significant split of `[lo, hi)`, if any; indices are absolute.
pub(crate) fn single_in(
    data: &LogSamples,
    lo: usize,
    hi: usize,
    config: &DetectorConfig,
    level: f64,
    seed: u64,
) -> Option<ChangeStatistic> {
    let n = hi - lo;
    if n < 2 * config.min_segment {
        return None;
    }
    let seg = Segment::new(data, lo, hi);
    let (grid, step) = split_grid(n, config.min_segment, MAX_CANDIDATES);
    let (observed, coarse) = seg.max_score(None, &grid);
    if !(observed > 0.0) || observed / (n as f64) < config.min_effect {
        return None;
    }
    let p = permutation_p_value(
        n,
        observed,
        |order| seg.max_score(Some(order), &grid).0,
        config.permutations_for(n),
        level,
        seed,
        config.execution,
    )?;
    let tau = if step > 1 {
        let from = coarse.saturating_sub(step - 1).max(config.min_segment);
        let to = (coarse + step - 1).min(n - config.min_segment);
        let fine: Vec<usize> = (from..=to).collect();
        seg.max_score(None, &fine).1
    } else {
        coarse
    };
    Some(ChangeStatistic {
        index: lo + tau,
        statistic: observed,
        p_value: p,
    })
}

/// Most significant single changepoint, or `None` when no split is
/// significant at `config.significance`.
pub fn odcp_single(
    samples: &[CompositionalSample],
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<Option<ChangeStatistic>> {
    check_input(samples, config)?;
    let data = LogSamples::new(samples);
    Ok(single_in(&data, 0, samples.len(), config, config.significance, rng.random()))
}

/// All changepoints found by recursive bisection.
pub fn odcp_multiple(
    samples: &[CompositionalSample],
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<DetectionReport> {
    check_input(samples, config)?;
    let data = LogSamples::new(samples);
    Ok(bisect(samples.len(), config, rng, |lo, hi, level, seed| {
        single_in(&data, lo, hi, config, level, seed)
    }))
}

/// Depth-first recursive bisection driven by a single-split test.
///
/// A segment is tested at level `α / k`, where `k` is the number of segments
/// in the partition found so far, so that the stationary pieces left after
/// the true changes are found do not each get a full `α` of false alarms.
pub(crate) fn bisect<F>(n: usize, config: &DetectorConfig, rng: &mut SimRng, mut test: F) -> DetectionReport
where
    F: FnMut(usize, usize, f64, u64) -> Option<ChangeStatistic>,
{
    let mut changes = Vec::new();
    let mut stack = vec![(0, n)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 * config.min_segment {
            continue;
        }
        let level = config.significance / (changes.len() + 1) as f64;
        if let Some(found) = test(lo, hi, level, rng.random()) {
            let at = found.index;
            changes.push(found);
            stack.push((at, hi));
            stack.push((lo, at));
        }
    }
    changes.sort_by_key(|c| c.index);
    DetectionReport { changes }
}
