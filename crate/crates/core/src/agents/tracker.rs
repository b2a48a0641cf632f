//! Incremental detection shared by the controllers that follow a known
//! model-change pattern.

use serde::{Deserialize, Serialize};

use crate::changepoint::{Detection, DetectorConfig, IncrementalDetector, Method};
use crate::error::Result;
use crate::mdp::ExperienceTuple;
use crate::rng::derive_seed;

/// Where the detector's buffer starts after a confirmed change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restart {
    /// At the estimated changepoint τ*, as in the Context QL pseudo-code.
    /// The buffer then straddles the controller's own switch, which the
    /// detector may pick up as a further change.
    AtChange,
    /// Just after the alarm, so every buffered tuple was produced under the
    /// policy in force after the switch.
    #[default]
    AtAlarm,
}

#[derive(Debug, Clone)]
pub(crate) struct ChangeTracker {
    method: Method,
    config: DetectorConfig,
    n_states: usize,
    labels: Option<Vec<usize>>,
    seed: u64,
    episode: u64,
    restart: Restart,
    expected: usize,
    remaining: usize,
    detector: IncrementalDetector,
    pub(crate) detections: Vec<u64>,
    pub(crate) switches: Vec<u64>,
}

impl ChangeTracker {
    /// Tracker that stops testing once `expected` changes were confirmed.
    pub(crate) fn new(
        method: Method,
        n_states: usize,
        config: DetectorConfig,
        seed: u64,
        restart: Restart,
        expected: usize,
    ) -> Result<Self> {
        let detector = IncrementalDetector::new(method, n_states, config.clone(), derive_seed(seed, 0))?;
        Ok(ChangeTracker {
            method,
            config,
            n_states,
            labels: None,
            seed,
            episode: 0,
            restart,
            expected,
            remaining: expected,
            detector,
            detections: Vec::new(),
            switches: Vec::new(),
        })
    }

    pub(crate) fn with_state_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        self.detector = self.detector.with_state_labels(labels.clone())?;
        self.labels = Some(labels);
        Ok(self)
    }

    fn fresh_detector(&self) -> Result<IncrementalDetector> {
        let det = IncrementalDetector::new(
            self.method,
            self.n_states,
            self.config.clone(),
            derive_seed(self.seed, self.episode),
        )?;
        match &self.labels {
            Some(l) => det.with_state_labels(l.clone()),
            None => Ok(det),
        }
    }

    /// Forget everything seen so far; the next tuple starts a new stream.
    pub(crate) fn reset(&mut self) -> Result<()> {
        self.episode += 1;
        self.detector = self.fresh_detector()?;
        self.remaining = self.expected;
        self.detections.clear();
        self.switches.clear();
        Ok(())
    }

    pub(crate) fn push(&mut self, tuple: &ExperienceTuple) -> Result<Option<Detection>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let Some(found) = self.detector.push(*tuple)? else {
            return Ok(None);
        };
        self.remaining -= 1;
        self.detections.push(found.epoch);
        self.switches.push(found.detected_at + 1);
        match self.restart {
            Restart::AtChange => self.detector.restart_at(found.epoch),
            Restart::AtAlarm => self.detector.restart_at(found.detected_at + 1),
        }
        Ok(Some(found))
    }
}
