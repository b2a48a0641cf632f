use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::mdp::{ExperienceTuple, MdpModel};
use crate::rng::SimRng;

/// Ground-truth changepoints `T_1 < ... < T_n` and the context labels active
/// on each segment. Context `contexts[j]` is active for `T_j <= t < T_{j+1}`
/// (with `T_0 = 0`, `T_{n+1} = horizon`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangepointSchedule {
    changepoints: Vec<u64>,
    contexts: Vec<usize>,
    horizon: u64,
}

impl ChangepointSchedule {
    pub fn new(changepoints: Vec<u64>, contexts: Vec<usize>, horizon: u64) -> Result<Self> {
        if changepoints.is_empty() {
            return Err(Error::validation("a schedule needs at least one changepoint"));
        }
        if contexts.len() != changepoints.len() + 1 {
            return Err(Error::validation(format!(
                "{} changepoints need {} context labels, got {}",
                changepoints.len(),
                changepoints.len() + 1,
                contexts.len()
            )));
        }
        if changepoints[0] == 0 || changepoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("changepoints must be positive and strictly increasing"));
        }
        if *changepoints.last().unwrap() >= horizon {
            return Err(Error::validation("last changepoint must precede the horizon"));
        }
        if contexts.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("consecutive contexts must differ"));
        }
        Ok(ChangepointSchedule {
            changepoints,
            contexts,
            horizon,
        })
    }

    /// Evenly spaced changes alternating through `pattern` (cycled as needed).
    pub fn alternating(n_changes: usize, pattern: &[usize], horizon: u64) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::validation("empty context pattern"));
        }
        let seg = horizon / (n_changes as u64 + 1);
        let changepoints = (1..=n_changes as u64).map(|i| i * seg).collect();
        let contexts = (0..=n_changes).map(|i| pattern[i % pattern.len()]).collect();
        Self::new(changepoints, contexts, horizon)
    }

    pub fn changepoints(&self) -> &[u64] {
        &self.changepoints
    }

    pub fn contexts(&self) -> &[usize] {
        &self.contexts
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Number of distinct context labels in the schedule.
    pub fn distinct_contexts(&self) -> usize {
        let mut seen: Vec<usize> = self.contexts.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Segment index active at epoch `t`.
    pub fn segment_at(&self, t: u64) -> usize {
        self.changepoints.partition_point(|&c| c <= t)
    }

    /// Context label active at epoch `t`.
    pub fn context_at(&self, t: u64) -> usize {
        self.contexts[self.segment_at(t)]
    }

    /// `(start, end)` epochs of every segment.
    pub fn segments(&self) -> Vec<(u64, u64)> {
        let mut bounds = Vec::with_capacity(self.changepoints.len() + 2);
        bounds.push(0);
        bounds.extend_from_slice(&self.changepoints);
        bounds.push(self.horizon);
        bounds.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Contexts sharing `S`, `A` and `γ`, switched according to a schedule.
#[derive(Debug, Clone)]
pub struct NonStationaryEnv {
    contexts: Vec<MdpModel>,
    schedule: ChangepointSchedule,
    clock: u64,
    state: usize,
}

impl NonStationaryEnv {
    pub fn new(contexts: Vec<MdpModel>, schedule: ChangepointSchedule, initial_state: usize) -> Result<Self> {
        let first = contexts
            .first()
            .ok_or_else(|| Error::validation("no contexts supplied"))?;
        if contexts.iter().any(|m| !m.same_shape(first)) {
            return Err(Error::validation("contexts must share |S|, |A| and the discount"));
        }
        if let Some(bad) = schedule.contexts().iter().find(|&&c| c >= contexts.len()) {
            return Err(Error::validation(format!("schedule names unknown context {bad}")));
        }
        if initial_state >= first.n_states() {
            return Err(Error::validation("initial state out of range"));
        }
        Ok(NonStationaryEnv {
            contexts,
            schedule,
            clock: 0,
            state: initial_state,
        })
    }

    pub fn contexts(&self) -> &[MdpModel] {
        &self.contexts
    }

    pub fn schedule(&self) -> &ChangepointSchedule {
        &self.schedule
    }

    /// Model generating the next step.
    pub fn active_model(&self) -> &MdpModel {
        &self.contexts[self.schedule.context_at(self.clock)]
    }
}

impl Environment for NonStationaryEnv {
    fn n_states(&self) -> usize {
        self.contexts[0].n_states()
    }

    fn n_actions(&self) -> usize {
        self.contexts[0].n_actions()
    }

    fn discount(&self) -> f64 {
        self.contexts[0].discount()
    }

    fn state(&self) -> usize {
        self.state
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn horizon(&self) -> u64 {
        self.schedule.horizon()
    }

    fn active_context(&self) -> usize {
        self.schedule.context_at(self.clock)
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<ExperienceTuple> {
        if self.clock >= self.schedule.horizon() {
            return Err(Error::EndOfEpisode(self.clock));
        }
        let (next, reward) = self.active_model().step(self.state, action, rng);
        let tuple = ExperienceTuple {
            state: self.state,
            reward,
            next_state: next,
            epoch: self.clock,
        };
        self.clock += 1;
        self.state = next;
        Ok(tuple)
    }
}

/// Single stationary model with a finite horizon.
#[derive(Debug, Clone)]
pub struct StationaryEnv {
    model: MdpModel,
    horizon: u64,
    clock: u64,
    state: usize,
}

impl StationaryEnv {
    pub fn new(model: MdpModel, horizon: u64, initial_state: usize) -> Result<Self> {
        if initial_state >= model.n_states() {
            return Err(Error::validation("initial state out of range"));
        }
        Ok(StationaryEnv {
            model,
            horizon,
            clock: 0,
            state: initial_state,
        })
    }

    pub fn model(&self) -> &MdpModel {
        &self.model
    }
}

impl Environment for StationaryEnv {
    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn discount(&self) -> f64 {
        self.model.discount()
    }

    fn state(&self) -> usize {
        self.state
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn horizon(&self) -> u64 {
        self.horizon
    }

    fn active_context(&self) -> usize {
        0
    }

    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<ExperienceTuple> {
        if self.clock >= self.horizon {
            return Err(Error::EndOfEpisode(self.clock));
        }
        let (next, reward) = self.model.step(self.state, action, rng);
        let tuple = ExperienceTuple {
            state: self.state,
            reward,
            next_state: next,
            epoch: self.clock,
        };
        self.clock += 1;
        self.state = next;
        Ok(tuple)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::generate_random_mdp;
    use crate::rng::stream;

    #[test]
    fn schedule_validation() {
        assert!(ChangepointSchedule::new(vec![], vec![0], 10).is_err());
        assert!(ChangepointSchedule::new(vec![5, 5], vec![0, 1, 0], 10).is_err());
        assert!(ChangepointSchedule::new(vec![5], vec![0, 0], 10).is_err());
        assert!(ChangepointSchedule::new(vec![10], vec![0, 1], 10).is_err());
        assert!(ChangepointSchedule::new(vec![5], vec![0, 1, 0], 10).is_err());
        assert!(ChangepointSchedule::new(vec![5], vec![0, 1], 10).is_ok());
    }

    #[test]
    fn active_context_boundaries() {
        let s = ChangepointSchedule::new(vec![500, 1000, 1500], vec![0, 1, 0, 1], 2000).unwrap();
        assert_eq!(s.context_at(0), 0);
        assert_eq!(s.context_at(499), 0);
        assert_eq!(s.context_at(500), 1);
        assert_eq!(s.context_at(999), 1);
        assert_eq!(s.context_at(1000), 0);
        assert_eq!(s.context_at(1999), 1);
        assert_eq!(s.segments(), vec![(0, 500), (500, 1000), (1000, 1500), (1500, 2000)]);
        assert_eq!(s.distinct_contexts(), 2);
        let alt = ChangepointSchedule::alternating(3, &[0, 1], 4000).unwrap();
        assert_eq!(alt.changepoints(), &[1000, 2000, 3000]);
        assert_eq!(alt.contexts(), &[0, 1, 0, 1]);
    }

    #[test]
    fn horizon_ends_the_episode() {
        let m = generate_random_mdp(3, 2, 0.9, &mut stream(0, 0)).unwrap();
        let sched = ChangepointSchedule::new(vec![2], vec![0, 1], 3).unwrap();
        let mut env = NonStationaryEnv::new(vec![m.clone(), m], sched, 0).unwrap();
        let mut rng = stream(0, 1);
        for t in 0..3 {
            assert_eq!(env.step(0, &mut rng).unwrap().epoch, t);
        }
        assert!(matches!(env.step(0, &mut rng), Err(Error::EndOfEpisode(3))));
    }

    /// The step at epoch `T_1` is drawn from the second context.
    #[test]
    fn boundary_sample_uses_next_context() {
        let to0 = crate::mdp::MdpModel::new(vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]], vec![vec![0.0], vec![0.0]], 0.9).unwrap();
        let to1 = crate::mdp::MdpModel::new(vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]], vec![vec![1.0], vec![1.0]], 0.9).unwrap();
        let sched = ChangepointSchedule::new(vec![10], vec![0, 1], 20).unwrap();
        let mut env = NonStationaryEnv::new(vec![to0, to1], sched, 0).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..10 {
            let t = env.step(0, &mut rng).unwrap();
            assert_eq!((t.next_state, t.reward), (0, 0.0));
        }
        assert_eq!(env.active_context(), 1);
        let t = env.step(0, &mut rng).unwrap();
        assert_eq!(t.epoch, 10);
        assert_eq!((t.next_state, t.reward), (1, 1.0));
    }

    #[test]
    fn pre_change_frequencies_match_first_context() {
        let mut rng = stream(11, 0);
        let m0 = generate_random_mdp(3, 2, 0.9, &mut rng).unwrap();
        let m1 = generate_random_mdp(3, 2, 0.9, &mut rng).unwrap();
        let n = 100_000u64;
        let sched = ChangepointSchedule::new(vec![n], vec![0, 1], n + 10).unwrap();
        let mut env = NonStationaryEnv::new(vec![m0.clone(), m1], sched, 0).unwrap();
        let mut counts = vec![[0usize; 3]; 3];
        for _ in 0..n {
            let t = env.step(1, &mut rng).unwrap();
            counts[t.state][t.next_state] += 1;
        }
        for (s, row) in counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            let tv: f64 = row
                .iter()
                .zip(m0.row(s, 1))
                .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv <= 0.02, "state {s}: tv {tv}");
        }
    }

    #[test]
    fn identical_contexts_match_stationary_stream() {
        let m = generate_random_mdp(4, 2, 0.9, &mut stream(12, 0)).unwrap();
        let sched = ChangepointSchedule::new(vec![50], vec![0, 1], 100).unwrap();
        let mut ns = NonStationaryEnv::new(vec![m.clone(), m.clone()], sched, 1).unwrap();
        let mut st = StationaryEnv::new(m, 100, 1).unwrap();
        let (mut r1, mut r2) = (stream(13, 0), stream(13, 0));
        for i in 0..100 {
            assert_eq!(ns.step(i % 2, &mut r1).unwrap(), st.step(i % 2, &mut r2).unwrap());
        }
    }
}
