//! Known-model switching: play an ε-policy around the optimal policy of the
//! context believed active and move to the next context of the pattern when
//! the detector confirms a change.

use super::tracker::{ChangeTracker, Restart};
use super::{Controller, ControllerReport};
use crate::changepoint::{DetectorConfig, Method};
use crate::error::{Error, Result};
use crate::mdp::{epsilon_perturbed, value_iteration, ExperienceTuple, MdpModel, PolicySpec};
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct ModelBasedSwitcher {
    name: String,
    /// Optimal policy of every context label.
    policies: Vec<Vec<usize>>,
    pattern: Vec<usize>,
    position: usize,
    epsilon: f64,
    n_actions: usize,
    tracker: ChangeTracker,
}

impl ModelBasedSwitcher {
    /// `contexts[l]` is the model of label `l`; `pattern` the label sequence.
    pub fn new(
        contexts: &[MdpModel],
        pattern: Vec<usize>,
        epsilon: f64,
        method: Method,
        config: DetectorConfig,
        seed: u64,
        restart: Restart,
    ) -> Result<Self> {
        let first = contexts.first().ok_or_else(|| Error::config("no contexts"))?;
        if pattern.is_empty() || pattern.iter().any(|&l| l >= contexts.len()) {
            return Err(Error::config("pattern must be non-empty and name known contexts"));
        }
        if contexts.iter().any(|m| !m.same_shape(first)) {
            return Err(Error::validation("contexts differ in state or action count"));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::config("epsilon must lie in [0, 1]"));
        }
        let policies = contexts
            .iter()
            .map(|m| match value_iteration(m, 1e-8)?.policy {
                PolicySpec::Deterministic(p) => Ok(p),
                _ => unreachable!("value iteration returns a deterministic policy"),
            })
            .collect::<Result<Vec<_>>>()?;
        let expected = pattern.len() - 1;
        let tracker = ChangeTracker::new(method, first.n_states(), config, seed, restart, expected)?;
        let name = match method {
            Method::Odcp => "ODCP e-policy",
            Method::Ecp => "ECP e-policy",
        };
        Ok(ModelBasedSwitcher {
            name: name.into(),
            policies,
            pattern,
            position: 0,
            epsilon,
            n_actions: first.n_actions(),
            tracker,
        })
    }

    /// Optimal policy of the context currently believed active.
    pub fn active_policy(&self) -> &[usize] {
        &self.policies[self.pattern[self.position]]
    }
}

impl Controller for ModelBasedSwitcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: usize, rng: &mut SimRng) -> Result<usize> {
        epsilon_perturbed(self.active_policy()[state], self.epsilon, self.n_actions, rng)
    }

    fn observe(&mut self, tuple: &ExperienceTuple, _action: usize, _rng: &mut SimRng) -> Result<()> {
        if self.tracker.push(tuple)?.is_some() {
            self.position += 1;
        }
        Ok(())
    }

    fn start_episode(&mut self, _learning: bool) {
        self.position = 0;
        self.tracker.reset().expect("detector config was validated at construction");
    }

    fn report(&self) -> ControllerReport {
        ControllerReport {
            detections: self.tracker.detections.clone(),
            switches: self.tracker.switches.clone(),
            ..ControllerReport::default()
        }
    }
}
