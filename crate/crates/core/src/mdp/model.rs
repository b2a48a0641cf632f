use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-9;

/// One stationary context: transition kernel `P[s][a][s']`, reward `R[s][a]`
/// and discount factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    n_states: usize,
    n_actions: usize,
    /// Flattened `P[s][a][s']`.
    transition: Vec<f64>,
    /// Flattened `R[s][a]`.
    reward: Vec<f64>,
    discount: f64,
    reward_bound: f64,
    #[serde(skip)]
    cdf: Vec<f64>,
}

impl MdpModel {
    /// Build from nested tables. The reward bound defaults to `max |R|`.
    pub fn new(transition: Vec<Vec<Vec<f64>>>, reward: Vec<Vec<f64>>, discount: f64) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        if reward.len() != n_states || reward.iter().any(|r| r.len() != n_actions) {
            return Err(Error::validation("reward table shape does not match transitions"));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != n_actions {
                return Err(Error::validation(format!("state {s} has {} actions", rows.len())));
            }
            for row in rows {
                if row.len() != n_states {
                    return Err(Error::validation(format!("state {s}: row length {}", row.len())));
                }
                flat.extend_from_slice(row);
            }
        }
        let reward: Vec<f64> = reward.into_iter().flatten().collect();
        Self::from_flat(n_states, n_actions, flat, reward, discount, None)
    }

    /// Build from flattened tables (`P` in `[s][a][s']` order, `R` in `[s][a]`).
    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        reward_bound: Option<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::validation("state and action sets must be non-empty"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::validation("transition tensor has the wrong size"));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::validation("reward matrix has the wrong size"));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::validation(format!("discount {discount} outside [0, 1)")));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::validation(format!(
                    "row (s={}, a={}) has a negative or non-finite entry",
                    i / n_actions,
                    i % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::validation(format!(
                    "row (s={}, a={}) sums to {sum}, not 1",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::validation("reward matrix has non-finite entries"));
        }
        let max_abs = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        let reward_bound = match reward_bound {
            Some(c) if c < max_abs => {
                return Err(Error::validation(format!("|R| reaches {max_abs} > bound {c}")));
            }
            Some(c) => c,
            None => max_abs,
        };
        let mut model = MdpModel {
            n_states,
            n_actions,
            transition,
            reward,
            discount,
            reward_bound,
            cdf: Vec::new(),
        };
        model.rebuild_cdf();
        Ok(model)
    }

    fn rebuild_cdf(&mut self) {
        let n = self.n_states;
        self.cdf = Vec::with_capacity(self.transition.len());
        for row in self.transition.chunks(n) {
            let mut acc = 0.0;
            for p in row {
                acc += p;
                self.cdf.push(acc);
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// The configured bound `C` with `|R(s, a)| <= C`.
    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// Copy of the model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::from_flat(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            discount,
            Some(self.reward_bound),
        )
    }

    /// `P[s][a][·]`.
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.row(state, action)[next]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.n_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// True when both models share `|S|`, `|A|` and the discount.
    pub fn same_shape(&self, other: &MdpModel) -> bool {
        self.n_states == other.n_states
            && self.n_actions == other.n_actions
            && self.discount == other.discount
    }

    /// Sample `(next_state, reward)` by inverse CDF on one uniform draw.
    pub fn step<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> (usize, f64) {
        let u: f64 = rng.random();
        (self.next_state_for(state, action, u), self.reward(state, action))
    }

    /// Inverse-CDF lookup for a fixed uniform `u`.
    pub fn next_state_for(&self, state: usize, action: usize, u: f64) -> usize {
        if self.cdf.is_empty() {
            // Deserialized models skip the cache.
            let row = self.row(state, action);
            let mut acc = 0.0;
            for (i, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            return last_positive(row);
        }
        let start = (state * self.n_actions + action) * self.n_states;
        let cdf = &self.cdf[start..start + self.n_states];
        let idx = cdf.partition_point(|&c| c <= u);
        if idx < self.n_states {
            idx
        } else {
            last_positive(self.row(state, action))
        }
    }
}

fn last_positive(row: &[f64]) -> usize {
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Observed triplet `<s, r, s'>` at epoch `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperienceTuple {
    pub state: usize,
    pub reward: f64,
    pub next_state: usize,
    pub epoch: u64,
}

/// Ordered experience tuples with the actions that produced them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryBuffer {
    tuples: Vec<ExperienceTuple>,
    actions: Vec<usize>,
}

impl TrajectoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        TrajectoryBuffer {
            tuples: Vec::with_capacity(n),
            actions: Vec::with_capacity(n),
        }
    }

    /// Append a tuple; its epoch must follow the previous one.
    pub fn push(&mut self, tuple: ExperienceTuple, action: usize) -> Result<()> {
        if let Some(last) = self.tuples.last() {
            if tuple.epoch != last.epoch + 1 {
                return Err(Error::validation(format!(
                    "epoch {} does not follow {}",
                    tuple.epoch, last.epoch
                )));
            }
        }
        self.tuples.push(tuple);
        self.actions.push(action);
        Ok(())
    }

    pub fn tuples(&self) -> &[ExperienceTuple] {
        &self.tuples
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.tuples.iter().map(|t| t.reward)
    }
}
