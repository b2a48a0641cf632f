use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, QTable, VisitCounts};
use crate::error::{Error, Result};

/// Stationary Markov action-selection rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// One action per state.
    Deterministic(Vec<usize>),
    /// One action distribution per state.
    Randomized(Vec<Vec<f64>>),
    /// `base[s]` with probability `1 - ε`, otherwise one of the other
    /// `|A| - 1` actions uniformly.
    EpsilonPerturbed {
        base: Vec<usize>,
        epsilon: f64,
        n_actions: usize,
    },
    /// Greedy in `Q` with probability `1 - ε`, otherwise uniform over `A`.
    EpsilonGreedy { epsilon: f64 },
    /// `argmax_b Q(s, b) + C sqrt(ln N(s) / N(s, b))`, untried actions first.
    Ucb { constant: f64 },
}

impl PolicySpec {
    /// Check per-state distributions and ε ranges.
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicySpec::Randomized(rows) => {
                for (s, row) in rows.iter().enumerate() {
                    let sum: f64 = row.iter().sum();
                    if row.iter().any(|p| *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::validation(format!("state {s}: distribution sums to {sum}")));
                    }
                }
                Ok(())
            }
            PolicySpec::EpsilonPerturbed { epsilon, .. } | PolicySpec::EpsilonGreedy { epsilon } => {
                if (0.0..=1.0).contains(epsilon) {
                    Ok(())
                } else {
                    Err(Error::validation(format!("epsilon {epsilon} outside [0, 1]")))
                }
            }
            PolicySpec::Ucb { constant } if *constant < 0.0 => {
                Err(Error::validation("UCB constant must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Probability that `action` is chosen in `state`, for rules that do not
    /// depend on `Q` (those return `None`).
    pub fn action_probability(&self, state: usize, action: usize, n_actions: usize) -> Option<f64> {
        match self {
            PolicySpec::Deterministic(table) => Some(f64::from(u8::from(table[state] == action))),
            PolicySpec::Randomized(rows) => Some(rows[state][action]),
            PolicySpec::EpsilonPerturbed { base, epsilon, .. } => Some(if n_actions == 1 {
                1.0
            } else if base[state] == action {
                1.0 - epsilon
            } else {
                epsilon / (n_actions - 1) as f64
            }),
            _ => None,
        }
    }
}

/// Draw an action for `state`.
///
/// `q` is required by ε-greedy and UCB, `counts` by UCB. All argmax
/// operations break ties toward the lowest action index.
pub fn select_action<R: Rng + ?Sized>(
    policy: &PolicySpec,
    state: usize,
    q: Option<&QTable>,
    counts: Option<&VisitCounts>,
    rng: &mut R,
) -> Result<usize> {
    match policy {
        PolicySpec::Deterministic(table) => table
            .get(state)
            .copied()
            .ok_or_else(|| Error::validation(format!("no action for state {state}"))),
        PolicySpec::Randomized(rows) => {
            let row = rows
                .get(state)
                .ok_or_else(|| Error::validation(format!("no distribution for state {state}")))?;
            if row.is_empty() {
                return Err(Error::validation("empty action set"));
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (a, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return Ok(a);
                }
            }
            Ok(row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1))
        }
        PolicySpec::EpsilonPerturbed {
            base,
            epsilon,
            n_actions,
        } => {
            let optimal = base
                .get(state)
                .copied()
                .ok_or_else(|| Error::validation(format!("no action for state {state}")))?;
            epsilon_perturbed(optimal, *epsilon, *n_actions, rng)
        }
        PolicySpec::EpsilonGreedy { epsilon } => {
            let q = q.ok_or_else(|| Error::validation("epsilon-greedy needs a Q table"))?;
            if q.n_actions() == 0 {
                return Err(Error::validation("empty action set"));
            }
            if rng.random::<f64>() < *epsilon {
                Ok(rng.random_range(0..q.n_actions()))
            } else {
                Ok(q.argmax(state))
            }
        }
        PolicySpec::Ucb { constant } => {
            let q = q.ok_or_else(|| Error::validation("UCB needs a Q table"))?;
            let counts = counts.ok_or_else(|| Error::validation("UCB needs visit counts"))?;
            ucb_action(q, counts, state, *constant)
        }
    }
}

/// ε-policy around a known optimal action.
pub(crate) fn epsilon_perturbed<R: Rng + ?Sized>(
    optimal: usize,
    epsilon: f64,
    n_actions: usize,
    rng: &mut R,
) -> Result<usize> {
    if n_actions == 0 {
        return Err(Error::validation("empty action set"));
    }
    if n_actions == 1 || rng.random::<f64>() >= epsilon {
        return Ok(optimal);
    }
    let k = rng.random_range(0..n_actions - 1);
    Ok(if k >= optimal { k + 1 } else { k })
}

fn ucb_action(q: &QTable, counts: &VisitCounts, state: usize, constant: f64) -> Result<usize> {
    let na = q.n_actions();
    if na == 0 {
        return Err(Error::validation("empty action set"));
    }
    if let Some(untried) = (0..na).find(|&b| counts.pair(state, b) == 0) {
        return Ok(untried);
    }
    let log_n = (counts.state(state) as f64).ln();
    let scores: Vec<f64> = (0..na)
        .map(|b| q.get(state, b) + constant * (log_n / counts.pair(state, b) as f64).sqrt())
        .collect();
    Ok(argmax(&scores).unwrap_or(0))
}
