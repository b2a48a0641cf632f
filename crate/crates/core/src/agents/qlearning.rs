use super::{Controller, ControllerReport, Exploration, LearningRate};
use crate::error::{Error, Result};
use crate::mdp::{ExperienceTuple, QTable, VisitCounts};
use crate::rng::SimRng;

/// One Q-learning update:
/// `Q(s, a) ← (1 − α) Q(s, a) + α (r + γ max_b Q(s', b))`.
pub fn ql_step(q: &mut QTable, tuple: &ExperienceTuple, action: usize, alpha: f64, discount: f64) {
    let target = tuple.reward + discount * q.max(tuple.next_state);
    let old = q.get(tuple.state, action);
    q.set(tuple.state, action, (1.0 - alpha) * old + alpha * target);
}

/// Repeated-update Q-learning: the update is applied as if repeated
/// `1 / π(a | s)` times, i.e. with step `β = 1 − (1 − α)^{1/π(a|s)}`.
pub fn ruql_step(
    q: &mut QTable,
    tuple: &ExperienceTuple,
    action: usize,
    alpha: f64,
    discount: f64,
    behavior_prob: f64,
) -> Result<()> {
    if !(behavior_prob > 0.0 && behavior_prob <= 1.0) {
        return Err(Error::validation("behaviour probability must lie in (0, 1]"));
    }
    let beta = 1.0 - (1.0 - alpha).powf(1.0 / behavior_prob);
    ql_step(q, tuple, action, beta, discount);
    Ok(())
}

/// Single-table Q-learning, optionally with repeated updates.
#[derive(Debug, Clone)]
pub struct QLearner {
    name: String,
    q: QTable,
    counts: VisitCounts,
    exploration: Exploration,
    rate: LearningRate,
    discount: f64,
    repeated: bool,
    learning: bool,
}

impl QLearner {
    pub fn new(n_states: usize, n_actions: usize, discount: f64, exploration: Exploration, rate: LearningRate) -> Result<Self> {
        exploration.validate()?;
        rate.validate()?;
        Ok(QLearner {
            name: "QL".into(),
            q: QTable::zeros(n_states, n_actions),
            counts: VisitCounts::new(n_states, n_actions),
            exploration,
            rate,
            discount,
            repeated: false,
            learning: true,
        })
    }

    /// Repeated-update variant.
    pub fn repeated(n_states: usize, n_actions: usize, discount: f64, exploration: Exploration, rate: LearningRate) -> Result<Self> {
        let mut learner = Self::new(n_states, n_actions, discount, exploration, rate)?;
        learner.name = "RUQL".into();
        learner.repeated = true;
        Ok(learner)
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }
}

impl Controller for QLearner {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: usize, rng: &mut SimRng) -> Result<usize> {
        self.exploration.select(&self.q, &self.counts, state, rng)
    }

    fn observe(&mut self, tuple: &ExperienceTuple, action: usize, _rng: &mut SimRng) -> Result<()> {
        if !self.learning {
            return Ok(());
        }
        let alpha = self.rate.at(self.counts.pair(tuple.state, action));
        if self.repeated {
            let p = self.exploration.probability(&self.q, &self.counts, tuple.state, action);
            ruql_step(&mut self.q, tuple, action, alpha, self.discount, p.max(f64::MIN_POSITIVE))?;
        } else {
            ql_step(&mut self.q, tuple, action, alpha, self.discount);
        }
        self.counts.record(tuple.state, action);
        Ok(())
    }

    fn start_episode(&mut self, learning: bool) {
        self.learning = learning;
    }

    fn report(&self) -> ControllerReport {
        ControllerReport {
            q_tables: 1,
            q_bytes: self.q.storage_bytes(),
            ..ControllerReport::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_random_mdp, Environment, StationaryEnv};
    use crate::mdp::{q_from_values, value_iteration};
    use crate::rng::stream;

    fn tuple(s: usize, r: f64, s2: usize) -> ExperienceTuple {
        ExperienceTuple { state: s, reward: r, next_state: s2, epoch: 0 }
    }

    #[test]
    fn zero_step_leaves_table() {
        let mut q = QTable::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let before = q.clone();
        ql_step(&mut q, &tuple(0, 5.0, 1), 1, 0.0, 0.9);
        assert_eq!(q, before);
    }

    #[test]
    fn unit_step_overwrites() {
        let mut q = QTable::from_values(1, 2, vec![1.0, 3.0]);
        ql_step(&mut q, &tuple(0, 2.0, 0), 0, 1.0, 0.5);
        assert_eq!(q.get(0, 0), 2.0 + 0.5 * 3.0);
    }

    #[test]
    fn repeated_update_step_sizes() {
        let t = tuple(0, 1.0, 1);
        let mut a = QTable::from_values(2, 2, vec![0.5, 0.0, 1.0, 2.0]);
        let mut b = a.clone();
        ql_step(&mut a, &t, 0, 0.1, 0.9);
        ruql_step(&mut b, &t, 0, 0.1, 0.9, 1.0).unwrap();
        assert_eq!(a, b);

        // p = 0.5 behaves like a step of 1 − 0.9² = 0.19.
        let mut c = QTable::from_values(2, 2, vec![0.5, 0.0, 1.0, 2.0]);
        let mut d = c.clone();
        ruql_step(&mut c, &t, 0, 0.1, 0.9, 0.5).unwrap();
        ql_step(&mut d, &t, 0, 0.19, 0.9);
        assert!((c.get(0, 0) - d.get(0, 0)).abs() < 1e-12);
        assert!(ruql_step(&mut c, &t, 0, 0.1, 0.9, 0.0).is_err());
    }

    /// Decaying step sizes under uniform exploration converge to the optimal
    /// action values.
    #[test]
    fn converges_to_optimal_q() {
        let mut rng = stream(50, 0);
        let model = generate_random_mdp(5, 5, 0.9, &mut rng).unwrap();
        let vi = value_iteration(&model, 1e-10).unwrap();
        let optimal = q_from_values(&model, &vi.values);
        let mut env = StationaryEnv::new(model, 200_000, 0).unwrap();
        let mut agent = QLearner::new(5, 5, 0.9, Exploration::EpsilonGreedy { epsilon: 1.0 }, LearningRate::Decaying { power: 0.7 }).unwrap();
        for _ in 0..200_000 {
            let s = env.state();
            let a = agent.act(s, &mut rng).unwrap();
            let t = env.step(a, &mut rng).unwrap();
            agent.observe(&t, a, &mut rng).unwrap();
        }
        let err = agent.q().sup_distance(&optimal);
        assert!(err <= 0.1 * 1.0 / (1.0 - 0.9), "sup error {err}");
    }
}
