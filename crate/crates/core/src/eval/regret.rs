//! Exact expected rewards of piecewise-stationary policies and regret
//! against the piecewise-optimal oracle.

use serde::{Deserialize, Serialize};

use crate::agents::optimal_policy;
use crate::envs::ChangepointSchedule;
use crate::error::{Error, Result};
use crate::mdp::MdpModel;

/// Deterministic policies played in turn: `policies[k]` is in force from
/// `switches[k − 1]` (or epoch 0) until `switches[k]`. With `epsilon > 0`
/// every policy is ε-perturbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolicy {
    pub policies: Vec<Vec<usize>>,
    pub switches: Vec<u64>,
    pub epsilon: f64,
}

impl PiecewisePolicy {
    fn piece_at(&self, t: u64) -> usize {
        self.switches.partition_point(|&s| s <= t).min(self.policies.len() - 1)
    }

    fn action_probability(&self, piece: usize, state: usize, action: usize, n_actions: usize) -> f64 {
        let base = self.policies[piece][state];
        if n_actions == 1 {
            1.0
        } else if action == base {
            1.0 - self.epsilon
        } else {
            self.epsilon / (n_actions - 1) as f64
        }
    }
}

/// `E[r_t]` for every epoch of the schedule, propagating the state
/// distribution from `initial_state`.
pub fn expected_rewards(
    contexts: &[MdpModel],
    schedule: &ChangepointSchedule,
    policy: &PiecewisePolicy,
    initial_state: usize,
) -> Result<Vec<f64>> {
    let first = contexts
        .first()
        .ok_or_else(|| Error::Unsupported("regret needs the context models".into()))?;
    let (ns, na) = (first.n_states(), first.n_actions());
    if policy.policies.is_empty() || policy.policies.iter().any(|p| p.len() != ns) {
        return Err(Error::validation("every piece needs one action per state"));
    }
    if schedule.contexts().iter().any(|&c| c >= contexts.len()) {
        return Err(Error::validation("schedule names a context without a model"));
    }
    if initial_state >= ns {
        return Err(Error::validation("initial state outside the model"));
    }
    let mut dist = vec![0.0; ns];
    dist[initial_state] = 1.0;
    let mut out = Vec::with_capacity(schedule.horizon() as usize);
    for t in 0..schedule.horizon() {
        let model = &contexts[schedule.context_at(t)];
        let piece = policy.piece_at(t);
        let mut next = vec![0.0; ns];
        let mut reward = 0.0;
        for s in 0..ns {
            if dist[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = dist[s] * policy.action_probability(piece, s, a, na);
                if w == 0.0 {
                    continue;
                }
                reward += w * model.reward(s, a);
                for (n, p) in next.iter_mut().zip(model.row(s, a)) {
                    *n += w * p;
                }
            }
        }
        out.push(reward);
        dist = next;
    }
    Ok(out)
}

/// Expected reward the agent's piecewise policy misses over the horizon,
/// compared with switching between the contexts' optimal policies exactly
/// at the true changepoints (with the same ε).
pub fn regret(
    contexts: &[MdpModel],
    schedule: &ChangepointSchedule,
    agent: &PiecewisePolicy,
    initial_state: usize,
) -> Result<f64> {
    if contexts.is_empty() {
        return Err(Error::Unsupported("regret needs the context models".into()));
    }
    let optimal = contexts.iter().map(optimal_policy).collect::<Result<Vec<_>>>()?;
    let oracle = PiecewisePolicy {
        policies: schedule.contexts().iter().map(|&c| optimal[c].clone()).collect(),
        switches: schedule.changepoints().to_vec(),
        epsilon: agent.epsilon,
    };
    let best: f64 = expected_rewards(contexts, schedule, &oracle, initial_state)?.iter().sum();
    let got: f64 = expected_rewards(contexts, schedule, agent, initial_state)?.iter().sum();
    Ok(best - got)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states, two actions; action `a` moves to state `a`. In context 0
    /// state 0 pays 1, in context 1 state 1 pays 1 (for either action).
    fn pair() -> Vec<MdpModel> {
        let p = vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        vec![
            MdpModel::from_flat(2, 2, p.clone(), vec![1.0, 1.0, 0.0, 0.0], 0.9, None).unwrap(),
            MdpModel::from_flat(2, 2, p, vec![0.0, 0.0, 1.0, 1.0], 0.9, None).unwrap(),
        ]
    }

    #[test]
    fn perfect_switching_has_no_regret() {
        let ctx = pair();
        let sched = ChangepointSchedule::new(vec![50], vec![0, 1], 100).unwrap();
        let agent = PiecewisePolicy {
            policies: vec![vec![0, 0], vec![1, 1]],
            switches: vec![50],
            epsilon: 0.0,
        };
        assert!(regret(&ctx, &sched, &agent, 0).unwrap().abs() < 1e-12);
    }

    /// Switching `d` epochs late keeps the agent in state 0 for `d` epochs of
    /// context 1, and one more epoch to move: `d + 1` rewards lost, minus the
    /// one the oracle also loses while moving.
    #[test]
    fn late_switch_costs_the_delay() {
        let ctx = pair();
        let sched = ChangepointSchedule::new(vec![50], vec![0, 1], 100).unwrap();
        for d in [0u64, 1, 7, 20] {
            let agent = PiecewisePolicy {
                policies: vec![vec![0, 0], vec![1, 1]],
                switches: vec![50 + d],
                epsilon: 0.0,
            };
            let r = regret(&ctx, &sched, &agent, 0).unwrap();
            assert!((r - d as f64).abs() < 1e-12, "d={d}: {r}");
        }
    }

    #[test]
    fn needs_models() {
        let sched = ChangepointSchedule::new(vec![5], vec![0, 1], 10).unwrap();
        let agent = PiecewisePolicy { policies: vec![vec![0]], switches: vec![], epsilon: 0.0 };
        assert!(matches!(regret(&[], &sched, &agent, 0), Err(Error::Unsupported(_))));
    }
}
