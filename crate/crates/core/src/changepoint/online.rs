//! Incremental detection over a growing tuple stream.
//!
//! The detector keeps the tuples observed since its anchor epoch and, every
//! `check_every` tuples, runs a single-change test on them. After a
//! detection the caller moves the anchor (to the detected change, or later if
//! the caller's own behaviour changed at detection time).

use serde::{Deserialize, Serialize};

use super::ecp::ecp_single;
use super::odcp::odcp_single;
use super::tuples::{per_tuple, tuple_points};
use super::{DetectorConfig, Method, TupleEncoder};
use crate::error::{Error, Result};
use crate::mdp::ExperienceTuple;
use crate::rng::{derive_seed, stream, SimRng};

/// A change confirmed by the incremental detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Estimated epoch at which the new regime starts.
    pub epoch: u64,
    /// Epoch of the tuple whose arrival triggered the confirming test.
    pub detected_at: u64,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct IncrementalDetector {
    method: Method,
    config: DetectorConfig,
    n_states: usize,
    labels: Option<Vec<usize>>,
    buffer: Vec<ExperienceTuple>,
    pending: usize,
    seed: u64,
    tests: u64,
}

impl IncrementalDetector {
    pub fn new(method: Method, n_states: usize, config: DetectorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(IncrementalDetector {
            method,
            config,
            n_states,
            labels: None,
            buffer: Vec::new(),
            pending: 0,
            seed,
            tests: 0,
        })
    }

    /// Categorise states by `labels[s]` instead of by `s`.
    pub fn with_state_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n_states {
            return Err(Error::validation("state labels must cover every state"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Tuples currently under test.
    pub fn buffered(&self) -> &[ExperienceTuple] {
        &self.buffer
    }

    /// Drop buffered tuples older than `epoch`.
    pub fn restart_at(&mut self, epoch: u64) {
        self.buffer.retain(|t| t.epoch >= epoch);
        self.pending = 0;
    }

    /// Fewest buffered tuples worth testing.
    fn min_tuples(&self) -> usize {
        self.config.window + (2 * self.config.min_segment - 1) * self.config.stride
    }

    /// Add a tuple; runs a test when one is due.
    pub fn push(&mut self, tuple: ExperienceTuple) -> Result<Option<Detection>> {
        if let Some(last) = self.buffer.last() {
            if tuple.epoch != last.epoch + 1 {
                return Err(Error::validation("tuples must arrive with consecutive epochs"));
            }
        }
        let now = tuple.epoch;
        self.buffer.push(tuple);
        self.pending += 1;
        if self.pending < self.config.check_every || self.buffer.len() < self.min_tuples() {
            return Ok(None);
        }
        self.pending = 0;
        self.test(now)
    }

    fn test(&mut self, now: u64) -> Result<Option<Detection>> {
        let mut rng: SimRng = stream(derive_seed(self.seed, self.tests), 0);
        self.tests += 1;
        let found = match self.method {
            Method::Odcp => {
                let encoder = TupleEncoder::fit(&self.buffer, self.n_states, self.labels.as_deref(), &self.config)?;
                let samples = encoder.encode(&self.buffer)?;
                odcp_single(&samples, &self.config, &mut rng)?.map(|c| (encoder.split_offset(c.index), c))
            }
            Method::Ecp => {
                ecp_single(&tuple_points(&self.buffer), &per_tuple(&self.config), &mut rng)?.map(|c| (c.index, c))
            }
        };
        Ok(found.map(|(offset, c)| Detection {
            epoch: self.buffer[0].epoch + offset as u64,
            detected_at: now,
            statistic: c.statistic,
            p_value: c.p_value,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_random_mdp, ChangepointSchedule, Environment, NonStationaryEnv};

    #[test]
    fn detects_a_change_in_a_stream() {
        let mut rng = stream(40, 0);
        let m0 = generate_random_mdp(5, 5, 0.9, &mut rng).unwrap();
        let m1 = generate_random_mdp(5, 5, 0.9, &mut rng).unwrap();
        let sched = ChangepointSchedule::new(vec![1000], vec![0, 1], 2000).unwrap();
        let mut env = NonStationaryEnv::new(vec![m0, m1], sched, 0).unwrap();
        // Repeated testing inflates the false-alarm rate of a 0.05-level test.
        let config = DetectorConfig { significance: 0.01, min_effect: 3.0, ..DetectorConfig::default() };
        let mut det = IncrementalDetector::new(Method::Odcp, 5, config, 1).unwrap();
        let mut found = None;
        for t in 0..2000u64 {
            let a = (t % 5) as usize;
            let tuple = env.step(a, &mut rng).unwrap();
            if let Some(d) = det.push(tuple).unwrap() {
                found = Some(d);
                break;
            }
        }
        let d = found.expect("no detection");
        assert!(d.epoch.abs_diff(1000) <= 100, "{d:?}");
        assert!(d.detected_at >= 1000);
    }

    #[test]
    fn rejects_gaps() {
        let mut det = IncrementalDetector::new(Method::Ecp, 2, DetectorConfig::default(), 0).unwrap();
        let t = |e| ExperienceTuple { state: 0, reward: 0.0, next_state: 1, epoch: e };
        det.push(t(0)).unwrap();
        assert!(det.push(t(2)).is_err());
    }
}
