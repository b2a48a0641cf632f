use serde::{Deserialize, Serialize};

use super::argmax;

/// Dense `Q[s][a]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_states * n_actions, "Q table size mismatch");
        QTable {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self, state: usize) -> usize {
        argmax(self.row(state)).unwrap_or(0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greedy deterministic policy (lowest index on ties).
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.argmax(s)).collect()
    }

    /// `max_{s,a} |self - other|`.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    /// Bytes held by the value array.
    pub fn storage_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Visit counters `N(s)` and `N(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitCounts {
    n_actions: usize,
    state: Vec<u64>,
    pair: Vec<u64>,
}

impl VisitCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        VisitCounts {
            n_actions,
            state: vec![0; n_states],
            pair: vec![0; n_states * n_actions],
        }
    }

    pub fn record(&mut self, state: usize, action: usize) {
        self.state[state] += 1;
        self.pair[state * self.n_actions + action] += 1;
    }

    pub fn state(&self, state: usize) -> u64 {
        self.state[state]
    }

    pub fn pair(&self, state: usize, action: usize) -> u64 {
        self.pair[state * self.n_actions + action]
    }
}
