//! E-divisive changepoints: energy distance between the two sides of a split,
//!
//! ```text
//! Q(τ) = τ(n−τ)/n · [ 2/(τ(n−τ)) Σ_{i<τ≤j} |x_i − x_j|
//!                     − 1/C(τ,2) Σ_{i<k<τ} |x_i − x_k|
//!                     − 1/C(n−τ,2) Σ_{τ≤j<l} |x_j − x_l| ]
//! ```
//!
//! with Euclidean distances between observation vectors. Every split of one
//! ordering is scored in `O(n²)` by moving one point at a time from the right
//! side to the left.

use rand::Rng;

use super::odcp::bisect;
use super::permutation::{permutation_p_value, split_grid};
use super::{check_points, ChangeStatistic, DetectionReport, DetectorConfig};
use crate::error::Result;
use crate::rng::SimRng;

struct Distances {
    n: usize,
    d: Vec<f64>,
}

impl Distances {
    fn new<P: AsRef<[f64]>>(points: &[P]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let dist = points[i]
                    .as_ref()
                    .iter()
                    .zip(points[j].as_ref())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                d[i * n + j] = dist;
                d[j * n + i] = dist;
            }
        }
        Distances { n, d }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// `Q(τ)` for every `τ` in `1..m` of the segment `[lo, lo+m)` read in
    /// `order`; entry `τ − 1` holds `Q(τ)`.
    fn scores(&self, lo: usize, m: usize, order: Option<&[usize]>) -> Vec<f64> {
        let idx: Vec<usize> = (0..m).map(|i| lo + order.map_or(i, |o| o[i])).collect();
        // row[t] = Σ_{j≠t} D(t, j) within the segment; left[t] = Σ_{i<t} D(i, t).
        let mut row = vec![0.0; m];
        let mut left = vec![0.0; m];
        let mut total = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                let v = self.at(idx[a], idx[b]);
                row[a] += v;
                row[b] += v;
                left[b] += v;
                total += v;
            }
        }
        let mut within_left = 0.0;
        let mut between = 0.0;
        let mut out = Vec::with_capacity(m.saturating_sub(1));
        for tau in 1..m {
            // Move point tau-1 to the left side.
            let t = tau - 1;
            let right_part = row[t] - left[t];
            between += right_part - left[t];
            within_left += left[t];
            let within_right = total - within_left - between;
            let (nl, nr) = (tau as f64, (m - tau) as f64);
            let mean_between = between / (nl * nr);
            let mean_left = if tau >= 2 { within_left / (nl * (nl - 1.0) / 2.0) } else { 0.0 };
            let mean_right = if m - tau >= 2 { within_right / (nr * (nr - 1.0) / 2.0) } else { 0.0 };
            let energy = 2.0 * mean_between - mean_left - mean_right;
            out.push(nl * nr / m as f64 * energy);
        }
        out
    }

    fn max_score(&self, lo: usize, m: usize, order: Option<&[usize]>, splits: &[usize]) -> (f64, usize) {
        let all = self.scores(lo, m, order);
        let mut best = (f64::NEG_INFINITY, splits[0]);
        for &tau in splits {
            if all[tau - 1] > best.0 {
                best = (all[tau - 1], tau);
            }
        }
        best
    }
}

fn single_in(
    dist: &Distances,
    lo: usize,
    hi: usize,
    config: &DetectorConfig,
    level: f64,
    seed: u64,
) -> Option<ChangeStatistic> {
    let m = hi - lo;
    if m < 2 * config.min_segment {
        return None;
    }
    let (splits, _) = split_grid(m, config.min_segment, usize::MAX);
    let (observed, tau) = dist.max_score(lo, m, None, &splits);
    if !(observed > 1e-12) {
        return None;
    }
    let p = permutation_p_value(
        m,
        observed,
        |order| dist.max_score(lo, m, Some(order), &splits).0,
        config.permutations_for(m),
        level,
        seed,
        config.execution,
    )?;
    Some(ChangeStatistic { index: lo + tau, statistic: observed, p_value: p })
}

/// Most significant single split by energy distance.
pub fn ecp_single<P: AsRef<[f64]>>(
    points: &[P],
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<Option<ChangeStatistic>> {
    check_points(points, config)?;
    let dist = Distances::new(points);
    Ok(single_in(&dist, 0, points.len(), config, config.significance, rng.random()))
}

/// E-divisive hierarchical bisection.
pub fn ecp_detect<P: AsRef<[f64]>>(
    points: &[P],
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<DetectionReport> {
    check_points(points, config)?;
    let dist = Distances::new(points);
    Ok(bisect(points.len(), config, rng, |lo, hi, level, seed| {
        single_in(&dist, lo, hi, config, level, seed)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::changepoint::CompositionalSample;
    use crate::rng::stream;

    /// Direct evaluation of the energy statistic at one split.
    fn brute(samples: &[CompositionalSample], tau: usize) -> f64 {
        let dist = |a: &CompositionalSample, b: &CompositionalSample| {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let (l, r) = samples.split_at(tau);
        let mean = |xs: &[CompositionalSample], ys: &[CompositionalSample], same: bool| {
            let mut s = 0.0;
            let mut c = 0.0;
            for (i, x) in xs.iter().enumerate() {
                for (j, y) in ys.iter().enumerate() {
                    if same && j <= i {
                        continue;
                    }
                    s += dist(x, y);
                    c += 1.0;
                }
            }
            if c == 0.0 {
                0.0
            } else {
                s / c
            }
        };
        let (nl, nr) = (l.len() as f64, r.len() as f64);
        nl * nr / (nl + nr) * (2.0 * mean(l, r, false) - mean(l, l, true) - mean(r, r, true))
    }

    fn regime(alpha: &[f64], n: usize, rng: &mut SimRng) -> Vec<CompositionalSample> {
        crate::changepoint::dirichlet_draws(alpha, n, rng)
    }

    #[test]
    fn incremental_scores_match_brute_force() {
        let mut rng = stream(1, 0);
        let samples = regime(&[1.0, 2.0, 3.0], 30, &mut rng);
        let dist = Distances::new(&samples);
        let fast = dist.scores(0, 30, None);
        for tau in 1..30 {
            assert!((fast[tau - 1] - brute(&samples, tau)).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_samples_never_split() {
        let s = CompositionalSample::new(vec![0.1, 0.9]).unwrap();
        let report = ecp_detect(&vec![s; 50], &DetectorConfig::default(), &mut stream(2, 0)).unwrap();
        assert!(report.is_empty());
    }

    #[test]
    fn finds_a_clear_shift() {
        let mut rng = stream(3, 0);
        let mut samples = regime(&[8.0, 1.0, 1.0], 100, &mut rng);
        samples.extend(regime(&[1.0, 1.0, 8.0], 100, &mut rng));
        let c = ecp_single(&samples, &DetectorConfig::default(), &mut rng).unwrap().unwrap();
        assert!(c.index.abs_diff(100) <= 5);
    }
}
