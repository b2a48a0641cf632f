//! Changepoint detection on experience-tuple streams.
//!
//! Two detectors look for distribution shifts in a tuple stream:
//!
//! * ODCP turns tuples into compositional samples (strictly positive simplex
//!   vectors) by counting `(s, reward bin, s')` categories over windows of
//!   consecutive tuples, fits a Dirichlet to each side of every candidate
//!   split and scores the split by the log-likelihood gain over a single fit;
//! * ECP (E-divisive) reads every tuple as the point `(s, r, s')` and scores
//!   splits by the between-segment energy distance.
//!
//! Both calibrate the maximal split score with a sample-order permutation
//! test and find multiple changes by recursive bisection.

mod dirichlet;
mod ecp;
mod encode;
mod matrix;
mod odcp;
mod online;
mod permutation;
mod tuples;

pub use dirichlet::{dirichlet_log_likelihood, dirichlet_mle, digamma, trigamma};
pub use ecp::{ecp_detect, ecp_single};
pub use encode::{encode_tuples, RewardBins, TupleEncoder};
pub use matrix::{detect_rows, read_matrix, rows_to_samples};
pub use odcp::{odcp_multiple, odcp_single, split_statistics};
pub use online::{Detection, IncrementalDetector};
pub use tuples::{detect_tuples, tuple_points, TupleChange};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::SimRng;

/// A strictly positive vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionalSample(Vec<f64>);

impl AsRef<[f64]> for CompositionalSample {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl CompositionalSample {
    pub fn new(vector: Vec<f64>) -> Result<Self> {
        if vector.is_empty() {
            return Err(Error::validation("empty compositional vector"));
        }
        if vector.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::validation("compositional entries must be positive and finite"));
        }
        if (vector.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::validation("compositional vector must sum to one"));
        }
        Ok(CompositionalSample(vector))
    }

    /// Normalise strictly positive weights onto the simplex.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::validation("weights must have positive total"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Odcp,
    Ecp,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "odcp" => Ok(Method::Odcp),
            "ecp" => Ok(Method::Ecp),
            other => Err(Error::config(format!("unknown detection method `{other}` (expected odcp or ecp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Permutations per significance test. `None` picks 199, or 499 for
    /// inputs longer than 5000 samples.
    pub n_permutations: Option<usize>,
    /// Significance level α.
    pub significance: f64,
    /// Fewest samples allowed on either side of a split.
    pub min_segment: usize,
    /// Pseudo-count added to every category before normalising a window.
    pub smoothing: f64,
    /// Tuples per encoding window.
    pub window: usize,
    /// Tuples between consecutive window starts.
    pub stride: usize,
    /// Most frequent tuple categories kept as separate coordinates; the rest
    /// are pooled into one cell.
    pub max_categories: usize,
    /// Reward bins when rewards take more distinct values than this.
    pub reward_bins: usize,
    /// Incremental mode re-tests after this many new tuples.
    pub check_every: usize,
    /// Incremental mode ignores splits whose log-likelihood gain per sample
    /// is below this value.
    pub min_effect: f64,
    /// Scheduling of permutation batches; never changes the result.
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            n_permutations: None,
            significance: 0.05,
            min_segment: 5,
            smoothing: 0.5,
            window: 10,
            stride: 10,
            max_categories: 24,
            reward_bins: 16,
            check_every: 25,
            min_effect: 0.0,
            execution: Execution::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.n_permutations {
            if b < 19 {
                return Err(Error::config("n_permutations must be at least 19"));
            }
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::config("significance must lie in (0, 1)"));
        }
        if self.min_segment < 2 {
            return Err(Error::config("min_segment must be at least 2"));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::config("smoothing must be positive"));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(Error::config("window and stride must be positive"));
        }
        if self.max_categories < 1 || self.reward_bins < 1 {
            return Err(Error::config("max_categories and reward_bins must be positive"));
        }
        if self.check_every == 0 {
            return Err(Error::config("check_every must be positive"));
        }
        if !(self.min_effect >= 0.0) {
            return Err(Error::config("min_effect must be non-negative"));
        }
        Ok(())
    }

    /// Permutation count used for `n` samples.
    pub fn permutations_for(&self, n: usize) -> usize {
        self.n_permutations
            .unwrap_or(if n > 5000 { 499 } else { 199 })
    }
}

/// One significant split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeStatistic {
    /// Position in the analysed sequence: the first sample after the change.
    pub index: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Significant splits in increasing `index` order.
    pub changes: Vec<ChangeStatistic>,
}

impl DetectionReport {
    pub fn indices(&self) -> Vec<usize> {
        self.changes.iter().map(|c| c.index).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }
}

/// Batch detection with either method.
pub fn detect(
    method: Method,
    samples: &[CompositionalSample],
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<DetectionReport> {
    match method {
        Method::Odcp => odcp_multiple(samples, config, rng),
        Method::Ecp => ecp_detect(samples, config, rng),
    }
}

pub(crate) fn check_input(samples: &[CompositionalSample], config: &DetectorConfig) -> Result<usize> {
    check_points(samples, config)
}

pub(crate) fn check_points<P: AsRef<[f64]>>(samples: &[P], config: &DetectorConfig) -> Result<usize> {
    config.validate()?;
    let d = samples
        .first()
        .map(|s| s.as_ref().len())
        .ok_or_else(|| Error::validation("no samples"))?;
    if samples.iter().any(|s| s.as_ref().len() != d || s.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(Error::validation("samples differ in dimension or hold non-finite values"));
    }
    if samples.len() < 2 * config.min_segment {
        return Err(Error::validation(format!(
            "{} samples cannot hold two segments of {}",
            samples.len(),
            config.min_segment
        )));
    }
    Ok(d)
}

/// Dirichlet draws by normalised Gamma variates, for tests.
#[cfg(test)]
pub(crate) fn dirichlet_draws(alpha: &[f64], n: usize, rng: &mut SimRng) -> Vec<CompositionalSample> {
    use rand_distr::{Distribution, Gamma};
    let gammas: Vec<Gamma<f64>> = alpha.iter().map(|a| Gamma::new(*a, 1.0).unwrap()).collect();
    (0..n)
        .map(|_| {
            let w: Vec<f64> = gammas.iter().map(|g| g.sample(rng).max(1e-300)).collect();
            CompositionalSample::from_weights(w).unwrap()
        })
        .collect()
}
