//! Metrics, the Monte Carlo harness and report serialisation.

mod regret;
mod report;
mod runner;

pub use regret::{expected_rewards, regret, PiecewisePolicy};
pub use report::{AgentSummary, MetricsReport, RunRecord, WindowScore};
pub use runner::run_experiment;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, sample standard deviation (`n − 1` denominator) and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

/// Summary of detected changepoints (or any other per-run values).
/// A single value has zero spread.
pub fn detection_stats(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::validation("no values to summarise"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(Summary { n, mean, sd, median })
}

/// Outcome of matching detections to true changepoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Matching {
    pub true_positives: usize,
    pub false_positives: usize,
    pub n_truth: usize,
}

impl Matching {
    /// `TP / detections`; one when nothing was detected.
    pub fn precision(&self) -> f64 {
        let detected = self.true_positives + self.false_positives;
        if detected == 0 {
            1.0
        } else {
            self.true_positives as f64 / detected as f64
        }
    }

    /// `TP / |truth|`; one when there is nothing to find.
    pub fn recall(&self) -> f64 {
        if self.n_truth == 0 {
            1.0
        } else {
            self.true_positives as f64 / self.n_truth as f64
        }
    }

    /// Pool counts, e.g. across Monte Carlo runs.
    pub fn merge(self, other: Matching) -> Matching {
        Matching {
            true_positives: self.true_positives + other.true_positives,
            false_positives: self.false_positives + other.false_positives,
            n_truth: self.n_truth + other.n_truth,
        }
    }
}

/// Greedy one-to-one matching: detections in epoch order each take the
/// nearest still unmatched true changepoint within `window` epochs.
pub fn match_detections(detected: &[u64], truth: &[u64], window: u64) -> Matching {
    let mut order = detected.to_vec();
    order.sort_unstable();
    let mut used = vec![false; truth.len()];
    let mut tp = 0;
    for d in &order {
        let best = (0..truth.len())
            .filter(|&i| !used[i] && truth[i].abs_diff(*d) <= window)
            .min_by_key(|&i| (truth[i].abs_diff(*d), i));
        if let Some(i) = best {
            used[i] = true;
            tp += 1;
        }
    }
    Matching {
        true_positives: tp,
        false_positives: order.len() - tp,
        n_truth: truth.len(),
    }
}

/// `(precision, recall)` of one set of detections.
pub fn precision_recall(detected: &[u64], truth: &[u64], window: u64) -> (f64, f64) {
    let m = match_detections(detected, truth, window);
    (m.precision(), m.recall())
}
