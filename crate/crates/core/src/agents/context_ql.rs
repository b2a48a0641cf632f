//! Context Q-learning: one Q table per distinct context of a known
//! model-change pattern, with the update target advanced by an incremental
//! changepoint detector.

use super::tracker::ChangeTracker;
use super::{Controller, ControllerReport, Exploration, LearningRate};
use crate::changepoint::{DetectorConfig, Method};
use crate::error::{Error, Result};
use crate::mdp::{ExperienceTuple, QTable, VisitCounts};
use crate::rng::SimRng;

pub use super::tracker::Restart;

/// Per-context Q tables plus the position in the model-change pattern.
#[derive(Debug, Clone)]
pub struct ContextQState {
    pattern: Vec<usize>,
    /// Table index for every pattern position.
    slot: Vec<usize>,
    q_tables: Vec<QTable>,
    counts: Vec<VisitCounts>,
    position: usize,
    last_confirmed: u64,
    rate: LearningRate,
    exploration: Exploration,
}

impl ContextQState {
    /// `pattern` lists context labels in the order the environment visits
    /// them; one table is allocated per distinct label.
    pub fn new(
        pattern: Vec<usize>,
        n_states: usize,
        n_actions: usize,
        rate: LearningRate,
        exploration: Exploration,
    ) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::config("model-change pattern is empty"));
        }
        rate.validate()?;
        exploration.validate()?;
        let mut labels: Vec<usize> = Vec::new();
        let slot = pattern
            .iter()
            .map(|l| match labels.iter().position(|x| x == l) {
                Some(i) => i,
                None => {
                    labels.push(*l);
                    labels.len() - 1
                }
            })
            .collect();
        let k = labels.len();
        Ok(ContextQState {
            pattern,
            slot,
            q_tables: vec![QTable::zeros(n_states, n_actions); k],
            counts: vec![VisitCounts::new(n_states, n_actions); k],
            position: 0,
            last_confirmed: 0,
            rate,
            exploration,
        })
    }

    pub fn pattern(&self) -> &[usize] {
        &self.pattern
    }

    pub fn q_tables(&self) -> &[QTable] {
        &self.q_tables
    }

    /// Bytes held by all Q tables.
    pub fn storage_bytes(&self) -> usize {
        self.q_tables.iter().map(QTable::storage_bytes).sum()
    }

    /// Pattern position, i.e. the number of confirmed changes.
    pub fn position(&self) -> usize {
        self.position
    }

    /// Label of the context currently believed active.
    pub fn active_context(&self) -> usize {
        self.pattern[self.position]
    }

    pub fn active_table(&self) -> &QTable {
        &self.q_tables[self.slot[self.position]]
    }

    pub fn last_confirmed(&self) -> u64 {
        self.last_confirmed
    }

    pub fn select<R: rand::Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<usize> {
        let i = self.slot[self.position];
        self.exploration.select(&self.q_tables[i], &self.counts[i], state, rng)
    }

    /// Q-learning update of the active context's table.
    pub fn update(&mut self, tuple: &ExperienceTuple, action: usize, discount: f64) {
        let i = self.slot[self.position];
        let alpha = self.rate.at(self.counts[i].pair(tuple.state, action));
        super::ql_step(&mut self.q_tables[i], tuple, action, alpha, discount);
        self.counts[i].record(tuple.state, action);
    }

    /// Move to the next pattern entry after a change confirmed at `epoch`.
    pub fn confirm_change(&mut self, epoch: u64) -> Result<()> {
        if self.position + 1 >= self.pattern.len() {
            return Err(Error::config(format!(
                "change at epoch {epoch} exceeds the {}-context pattern",
                self.pattern.len()
            )));
        }
        self.position += 1;
        self.last_confirmed = epoch;
        Ok(())
    }

    /// Return to the first pattern entry, keeping the learned tables.
    pub fn rewind(&mut self) {
        self.position = 0;
        self.last_confirmed = 0;
    }
}

/// Context Q-learning controller.
///
/// Without a detector it is plain Q-learning on the first context's table.
#[derive(Debug, Clone)]
pub struct ContextQL {
    state: ContextQState,
    discount: f64,
    tracker: Option<ChangeTracker>,
    learning: bool,
}

impl ContextQL {
    pub fn new(state: ContextQState, discount: f64) -> Self {
        ContextQL { state, discount, tracker: None, learning: true }
    }

    /// Attach an incremental detector seeded by `seed`.
    pub fn with_detector(
        mut self,
        method: Method,
        n_states: usize,
        config: DetectorConfig,
        seed: u64,
        restart: Restart,
    ) -> Result<Self> {
        let expected = self.state.pattern.len() - 1;
        self.tracker = Some(ChangeTracker::new(method, n_states, config, seed, restart, expected)?);
        Ok(self)
    }

    /// Let the detector categorise states by `labels[s]`.
    pub fn with_state_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if let Some(t) = self.tracker.take() {
            self.tracker = Some(t.with_state_labels(labels)?);
        }
        Ok(self)
    }

    pub fn state(&self) -> &ContextQState {
        &self.state
    }
}

impl Controller for ContextQL {
    fn name(&self) -> &str {
        "Context QL"
    }

    fn act(&mut self, state: usize, rng: &mut SimRng) -> Result<usize> {
        self.state.select(state, rng)
    }

    fn observe(&mut self, tuple: &ExperienceTuple, action: usize, _rng: &mut SimRng) -> Result<()> {
        if self.learning {
            self.state.update(tuple, action, self.discount);
        }
        if let Some(tracker) = self.tracker.as_mut() {
            if let Some(found) = tracker.push(tuple)? {
                self.state.confirm_change(found.epoch)?;
            }
        }
        Ok(())
    }

    fn start_episode(&mut self, learning: bool) {
        self.learning = learning;
        self.state.rewind();
        if let Some(t) = self.tracker.as_mut() {
            // Re-creating a detector with an already validated config cannot fail.
            t.reset().expect("detector config was validated at construction");
        }
    }

    fn report(&self) -> ControllerReport {
        let (detections, switches) = match &self.tracker {
            Some(t) => (t.detections.clone(), t.switches.clone()),
            None => (Vec::new(), Vec::new()),
        };
        ControllerReport {
            detections,
            switches,
            q_tables: self.state.q_tables.len(),
            q_bytes: self.state.storage_bytes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::QLearner;
    use crate::envs::{generate_random_mdp, Environment, StationaryEnv};
    use crate::rng::stream;

    const EXPLORE: Exploration = Exploration::EpsilonGreedy { epsilon: 0.1 };

    #[test]
    fn tables_follow_distinct_contexts() {
        let rate = LearningRate::default();
        let s = ContextQState::new(vec![0, 1, 0, 1, 0, 1], 4, 3, rate, EXPLORE).unwrap();
        assert_eq!(s.q_tables().len(), 2);
        let s = ContextQState::new(vec![2, 0, 1, 0], 4, 3, rate, EXPLORE).unwrap();
        assert_eq!(s.q_tables().len(), 3);
        assert!(ContextQState::new(vec![], 4, 3, rate, EXPLORE).is_err());
    }

    #[test]
    fn revisited_context_resumes_its_table() {
        let mut s = ContextQState::new(vec![0, 1, 0], 1, 1, LearningRate::Constant { alpha: 1.0 }, EXPLORE).unwrap();
        let t = |r| ExperienceTuple { state: 0, reward: r, next_state: 0, epoch: 0 };
        s.update(&t(1.0), 0, 0.0);
        s.confirm_change(10).unwrap();
        assert_eq!(s.active_table().get(0, 0), 0.0);
        s.update(&t(5.0), 0, 0.0);
        s.confirm_change(20).unwrap();
        assert_eq!(s.active_context(), 0);
        assert_eq!(s.active_table().get(0, 0), 1.0);
        assert_eq!(s.last_confirmed(), 20);
        assert!(s.confirm_change(30).is_err());
    }

    #[test]
    fn without_detections_matches_plain_q_learning() {
        let mut rng = stream(3, 0);
        let model = generate_random_mdp(5, 5, 0.9, &mut rng).unwrap();
        let run = |agent: &mut dyn Controller| {
            let mut env = StationaryEnv::new(model.clone(), 3000, 0).unwrap();
            let mut rng = stream(4, 0);
            let mut actions = Vec::new();
            for _ in 0..3000 {
                let a = agent.act(env.state(), &mut rng).unwrap();
                let t = env.step(a, &mut rng).unwrap();
                agent.observe(&t, a, &mut rng).unwrap();
                actions.push(a);
            }
            actions
        };
        let rate = LearningRate::default();
        let mut ql = QLearner::new(5, 5, 0.9, EXPLORE, rate).unwrap();
        let mut cql = ContextQL::new(ContextQState::new(vec![0], 5, 5, rate, EXPLORE).unwrap(), 0.9)
            .with_detector(Method::Odcp, 5, DetectorConfig::default(), 9, Restart::AtAlarm)
            .unwrap();
        assert_eq!(run(&mut ql), run(&mut cql));
        assert_eq!(ql.q(), cql.state().active_table());
        assert!(cql.report().detections.is_empty());
    }
}
