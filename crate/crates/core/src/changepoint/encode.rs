//! Experience tuples to compositional samples.
//!
//! A tuple `⟨s, r, s'⟩` is a category in the alphabet `S × bins(R) × S`.
//! Each window of consecutive tuples becomes the smoothed category
//! frequency vector `(count + ε) / (w + dε)`.

use serde::{Deserialize, Serialize};

use super::{CompositionalSample, DetectorConfig};
use crate::error::{Error, Result};
use crate::mdp::ExperienceTuple;

const REWARD_EPS: f64 = 1e-9;

/// Maps rewards to bins. Few distinct values get one bin each; otherwise
/// bins are delimited by empirical quantiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardBins {
    /// Sorted distinct values.
    Exact(Vec<f64>),
    /// Sorted interior edges; bin `b` holds `edges[b-1] <= r < edges[b]`.
    Quantile(Vec<f64>),
}

impl RewardBins {
    pub fn fit(rewards: &[f64], max_bins: usize) -> Result<Self> {
        if rewards.is_empty() || max_bins == 0 {
            return Err(Error::validation("reward binning needs rewards and at least one bin"));
        }
        let mut sorted = rewards.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct: Vec<f64> = Vec::new();
        for &r in &sorted {
            if distinct.last().is_none_or(|last| r - last > REWARD_EPS) {
                distinct.push(r);
            }
        }
        if distinct.len() <= max_bins {
            return Ok(RewardBins::Exact(distinct));
        }
        let n = sorted.len();
        let mut edges: Vec<f64> = (1..max_bins).map(|b| sorted[b * n / max_bins]).collect();
        edges.dedup();
        Ok(RewardBins::Quantile(edges))
    }

    pub fn len(&self) -> usize {
        match self {
            RewardBins::Exact(v) => v.len(),
            RewardBins::Quantile(e) => e.len() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bin(&self, reward: f64) -> usize {
        match self {
            RewardBins::Exact(values) => {
                // Nearest stored value.
                let i = values.partition_point(|v| *v < reward);
                if i == 0 {
                    0
                } else if i == values.len() || reward - values[i - 1] <= values[i] - reward {
                    i - 1
                } else {
                    i
                }
            }
            RewardBins::Quantile(edges) => edges.partition_point(|e| *e <= reward),
        }
    }
}

/// Windowed category counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleEncoder {
    /// Optional coarsening of states before categorisation.
    labels: Option<Vec<usize>>,
    n_labels: usize,
    bins: RewardBins,
    /// Coordinate of every raw category; `None` means the full alphabet.
    coordinate: Option<Vec<usize>>,
    dim: usize,
    window: usize,
    stride: usize,
    smoothing: f64,
}

impl TupleEncoder {
    /// Encoder over the full alphabet `S × bins × S`.
    pub fn full(n_states: usize, bins: RewardBins, config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        if n_states == 0 {
            return Err(Error::validation("no states"));
        }
        let dim = n_states * n_states * bins.len();
        Ok(TupleEncoder {
            labels: None,
            n_labels: n_states,
            bins,
            coordinate: None,
            dim,
            window: config.window,
            stride: config.stride,
            smoothing: config.smoothing,
        })
    }

    /// Encoder fitted to `tuples`: reward bins from the observed rewards, and
    /// the `config.max_categories` most frequent categories kept as separate
    /// coordinates with all remaining observed categories pooled into one.
    ///
    /// Fitting depends only on category counts, so any reordering of the
    /// tuples yields the same encoder.
    pub fn fit(
        tuples: &[ExperienceTuple],
        n_states: usize,
        labels: Option<&[usize]>,
        config: &DetectorConfig,
    ) -> Result<Self> {
        config.validate()?;
        if tuples.is_empty() {
            return Err(Error::validation("no tuples to encode"));
        }
        let rewards: Vec<f64> = tuples.iter().map(|t| t.reward).collect();
        let bins = RewardBins::fit(&rewards, config.reward_bins)?;
        let n_labels = match labels {
            Some(l) => {
                if l.len() != n_states {
                    return Err(Error::validation("state labels must cover every state"));
                }
                l.iter().max().map_or(1, |m| m + 1)
            }
            None => n_states,
        };
        let mut enc = TupleEncoder {
            labels: labels.map(<[usize]>::to_vec),
            n_labels,
            bins,
            coordinate: None,
            dim: 0,
            window: config.window,
            stride: config.stride,
            smoothing: config.smoothing,
        };
        let raw = enc.raw_size();
        let mut counts = vec![0usize; raw];
        for t in tuples {
            counts[enc.raw_category(t)?] += 1;
        }
        let mut seen: Vec<usize> = (0..raw).filter(|&c| counts[c] > 0).collect();
        seen.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
        let kept = seen.len().min(config.max_categories);
        // Every unkept category (observed or not) maps to the pooled cell.
        let rest = kept;
        let mut coordinate = vec![rest; raw];
        for (i, &c) in seen[..kept].iter().enumerate() {
            coordinate[c] = i;
        }
        let pooled = seen.len() > kept || kept < 2;
        enc.dim = kept + usize::from(pooled);
        enc.coordinate = Some(coordinate);
        Ok(enc)
    }

    fn raw_size(&self) -> usize {
        self.n_labels * self.n_labels * self.bins.len()
    }

    fn label(&self, state: usize) -> usize {
        self.labels.as_ref().map_or(state, |l| l[state])
    }

    fn raw_category(&self, t: &ExperienceTuple) -> Result<usize> {
        let (s, s2) = (self.label_checked(t.state)?, self.label_checked(t.next_state)?);
        Ok((s * self.bins.len() + self.bins.bin(t.reward)) * self.n_labels + s2)
    }

    fn label_checked(&self, state: usize) -> Result<usize> {
        match &self.labels {
            Some(l) => l
                .get(state)
                .copied()
                .ok_or_else(|| Error::validation(format!("state {state} out of range"))),
            None if state < self.n_labels => Ok(self.label(state)),
            None => Err(Error::validation(format!("state {state} out of range"))),
        }
    }

    /// Coordinate of a tuple in the encoded vector.
    pub fn category(&self, t: &ExperienceTuple) -> Result<usize> {
        let raw = self.raw_category(t)?;
        Ok(self.coordinate.as_ref().map_or(raw, |c| c[raw]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins(&self) -> &RewardBins {
        &self.bins
    }

    /// Number of windows that fit in `len` tuples.
    pub fn n_windows(&self, len: usize) -> usize {
        if len < self.window {
            0
        } else {
            (len - self.window) / self.stride + 1
        }
    }

    /// Tuple offset of the change implied by a split before window `index`:
    /// the start of that window, shifted to the middle of the overlap with
    /// the previous window.
    pub fn split_offset(&self, index: usize) -> usize {
        index * self.stride + self.window.saturating_sub(self.stride) / 2
    }

    pub fn encode(&self, tuples: &[ExperienceTuple]) -> Result<Vec<CompositionalSample>> {
        if tuples.len() < self.window {
            return Err(Error::validation(format!(
                "window of {} tuples is longer than the {}-tuple sequence",
                self.window,
                tuples.len()
            )));
        }
        let cats: Vec<usize> = tuples.iter().map(|t| self.category(t)).collect::<Result<_>>()?;
        let denom = self.window as f64 + self.dim as f64 * self.smoothing;
        let mut counts = vec![0usize; self.dim];
        let mut out = Vec::with_capacity(self.n_windows(tuples.len()));
        for w in 0..self.n_windows(tuples.len()) {
            counts.iter_mut().for_each(|c| *c = 0);
            for &c in &cats[w * self.stride..w * self.stride + self.window] {
                counts[c] += 1;
            }
            let v: Vec<f64> = counts.iter().map(|&c| (c as f64 + self.smoothing) / denom).collect();
            out.push(CompositionalSample::from_weights(v)?);
        }
        Ok(out)
    }
}

/// Encode `tuples` with an encoder fitted to them.
pub fn encode_tuples(
    tuples: &[ExperienceTuple],
    n_states: usize,
    config: &DetectorConfig,
) -> Result<Vec<CompositionalSample>> {
    TupleEncoder::fit(tuples, n_states, None, config)?.encode(tuples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::generate_random_mdp;
    use crate::mdp::{stationary_distribution, value_iteration, PolicySpec};
    use crate::rng::stream;

    fn tuple(s: usize, r: f64, s2: usize, t: u64) -> ExperienceTuple {
        ExperienceTuple { state: s, reward: r, next_state: s2, epoch: t }
    }

    #[test]
    fn reward_bins() {
        let exact = RewardBins::fit(&[1.0, 0.5, 1.0 + 1e-12, 0.5], 16).unwrap();
        assert_eq!(exact.len(), 2);
        assert_eq!(exact.bin(0.5), 0);
        assert_eq!(exact.bin(1.0), 1);
        let many: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let q = RewardBins::fit(&many, 16).unwrap();
        assert_eq!(q.len(), 16);
        let mut per_bin = [0usize; 16];
        for r in &many {
            per_bin[q.bin(*r)] += 1;
        }
        assert!(per_bin.iter().all(|c| (62..=63).contains(c)), "{per_bin:?}");
    }

    #[test]
    fn constant_tuple_mass() {
        let config = DetectorConfig { window: 8, stride: 1, smoothing: 0.5, ..DetectorConfig::default() };
        let tuples: Vec<_> = (0..20).map(|t| tuple(1, 2.0, 2, t)).collect();
        let full = TupleEncoder::full(3, RewardBins::fit(&[2.0], 16).unwrap(), &config).unwrap();
        let d = 9.0;
        let samples = full.encode(&tuples).unwrap();
        assert_eq!(samples.len(), 13);
        let v = samples[0].as_slice();
        let hot = full.category(&tuples[0]).unwrap();
        assert!((v[hot] - 8.5 / (8.0 + d * 0.5)).abs() < 1e-12);
        for (i, x) in v.iter().enumerate() {
            if i != hot {
                assert!((x - 0.5 / (8.0 + d * 0.5)).abs() < 1e-12);
            }
        }
        // The fitted encoder keeps the one observed category plus a pooled cell.
        let fitted = encode_tuples(&tuples, 3, &config).unwrap();
        assert_eq!(fitted[0].as_slice(), &[8.5 / 9.0, 0.5 / 9.0]);
    }

    #[test]
    fn window_encoding_ignores_order_inside_window() {
        let config = DetectorConfig { window: 6, stride: 6, ..DetectorConfig::default() };
        let mut tuples: Vec<_> = (0..6).map(|t| tuple(t as usize % 3, (t % 2) as f64, (t as usize + 1) % 3, t)).collect();
        let enc = TupleEncoder::fit(&tuples, 3, None, &config).unwrap();
        let a = enc.encode(&tuples).unwrap();
        tuples.reverse();
        let b = enc.encode(&tuples).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_longer_than_sequence_fails() {
        let config = DetectorConfig { window: 50, ..DetectorConfig::default() };
        let tuples: Vec<_> = (0..10).map(|t| tuple(0, 0.0, 0, t)).collect();
        assert!(encode_tuples(&tuples, 2, &config).is_err());
    }

    /// Long windows converge to the exact stationary tuple law of the chain
    /// induced by a fixed policy.
    #[test]
    fn long_windows_approach_stationary_tuple_law() {
        let mut rng = stream(31, 0);
        let m = generate_random_mdp(5, 3, 0.9, &mut rng).unwrap();
        let PolicySpec::Deterministic(pi) = value_iteration(&m, 1e-6).unwrap().policy else {
            unreachable!()
        };
        let xi = stationary_distribution(&m, &pi).unwrap();
        let mut s = 0;
        let mut tuples = Vec::new();
        for t in 0..20_000u64 {
            let (s2, r) = m.step(s, pi[s], &mut rng);
            tuples.push(tuple(s, r, s2, t));
            s = s2;
        }
        let config = DetectorConfig { window: 500, stride: 500, smoothing: 1e-9, ..DetectorConfig::default() };
        let bins = RewardBins::fit(&tuples.iter().map(|t| t.reward).collect::<Vec<_>>(), 16).unwrap();
        let enc = TupleEncoder::full(5, bins, &config).unwrap();
        let mut exact = vec![0.0; enc.dim()];
        for s in 0..5 {
            for s2 in 0..5 {
                let t = tuple(s, m.reward(s, pi[s]), s2, 0);
                exact[enc.category(&t).unwrap()] += xi[s] * m.prob(s, pi[s], s2);
            }
        }
        let samples = enc.encode(&tuples[10_000..]).unwrap();
        let mut mean = vec![0.0; enc.dim()];
        for w in &samples {
            for (m, x) in mean.iter_mut().zip(w.as_slice()) {
                *m += x / samples.len() as f64;
            }
        }
        let tv: f64 = mean.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv <= 0.05, "tv {tv}");
    }
}
