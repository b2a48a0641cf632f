//! Controllers: Context Q-learning, tabular baselines and the model-based
//! switching strategies.
//!
//! Every controller implements [`Controller`], so the evaluation harness can
//! drive them uniformly: `act` picks an action for the observed state and
//! `observe` hands back the resulting experience tuple.

mod cdm;
mod context_ql;
mod qlearning;
mod sr;
mod switcher;
mod tracker;
mod ucrl2;

pub use cdm::{cdm_step, BlockRule, CdmSwitcher, CusumState};
pub use context_ql::{ContextQL, ContextQState, Restart};
pub use qlearning::{ql_step, ruql_step, QLearner};
pub(crate) use sr::optimal_policy;
pub use sr::{kl_policy, kl_table, sr_update, SrPhase, SrState, SrSwitcher};
pub use switcher::ModelBasedSwitcher;
pub use ucrl2::{extended_value_iteration, restart_epochs, OptimisticPlan, Ucrl2};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{select_action, ExperienceTuple, PolicySpec, QTable, VisitCounts};
use crate::rng::SimRng;

/// Added to every transition probability (then renormalised) before taking
/// likelihood ratios.
pub const PROBABILITY_SMOOTHING: f64 = 1e-6;

pub trait Controller: Send {
    fn name(&self) -> &str;

    /// Action for the observed `state`.
    fn act(&mut self, state: usize, rng: &mut SimRng) -> Result<usize>;

    /// Feedback for the last action.
    fn observe(&mut self, tuple: &ExperienceTuple, action: usize, rng: &mut SimRng) -> Result<()>;

    /// Begin a new episode. Learning controllers stop updating their
    /// estimates when `learning` is false; context-tracking controllers return
    /// to the start of their pattern.
    fn start_episode(&mut self, learning: bool) {
        let _ = learning;
    }

    fn report(&self) -> ControllerReport;
}

/// What a controller exposes after (or during) an episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControllerReport {
    /// Epochs the controller labelled as changepoints in the current episode.
    pub detections: Vec<u64>,
    /// Epochs at which the controller changed the policy it follows.
    pub switches: Vec<u64>,
    /// Q tables held (zero for model-based controllers).
    pub q_tables: usize,
    pub q_bytes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    EpsilonGreedy { epsilon: f64 },
    Ucb { constant: f64 },
    /// Softmax over `Q(s, ·) / temperature`.
    Boltzmann { temperature: f64 },
}

impl Exploration {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Exploration::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                Err(Error::config("epsilon must lie in [0, 1]"))
            }
            Exploration::Ucb { constant } if !(constant >= 0.0) => Err(Error::config("UCB constant must be non-negative")),
            Exploration::Boltzmann { temperature } if !(temperature > 0.0 && temperature.is_finite()) => {
                Err(Error::config("temperature must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn select<R: Rng + ?Sized>(&self, q: &QTable, counts: &VisitCounts, state: usize, rng: &mut R) -> Result<usize> {
        match *self {
            Exploration::EpsilonGreedy { epsilon } => {
                select_action(&PolicySpec::EpsilonGreedy { epsilon }, state, Some(q), Some(counts), rng)
            }
            Exploration::Ucb { constant } => select_action(&PolicySpec::Ucb { constant }, state, Some(q), Some(counts), rng),
            Exploration::Boltzmann { temperature } => {
                let weights = softmax(q.row(state), temperature);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return Ok(a);
                    }
                }
                Ok(weights.len() - 1)
            }
        }
    }

    /// Probability that the behaviour policy picks `action` in `state`.
    pub fn probability(&self, q: &QTable, counts: &VisitCounts, state: usize, action: usize) -> f64 {
        match *self {
            Exploration::EpsilonGreedy { epsilon } => {
                let na = q.n_actions() as f64;
                let greedy = if q.argmax(state) == action { 1.0 - epsilon } else { 0.0 };
                greedy + epsilon / na
            }
            // UCB is deterministic given the table and the counts.
            Exploration::Ucb { constant } => {
                let mut scratch = crate::rng::stream(0, 0);
                let chosen = select_action(&PolicySpec::Ucb { constant }, state, Some(q), Some(counts), &mut scratch);
                if chosen.ok() == Some(action) {
                    1.0
                } else {
                    0.0
                }
            }
            Exploration::Boltzmann { temperature } => softmax(q.row(state), temperature)[action],
        }
    }
}

fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values.iter().map(|v| ((v - top) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { alpha: f64 },
    /// `1 / (1 + n(s, a))^power`, with `n` the visits before this update.
    Decaying { power: f64 },
}

impl Default for LearningRate {
    fn default() -> Self {
        LearningRate::Constant { alpha: 0.1 }
    }
}

impl LearningRate {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::config("learning rate must lie in [0, 1]"))
            }
            LearningRate::Decaying { power } if !(power > 0.5 && power <= 1.0) => {
                Err(Error::config("decay power must lie in (0.5, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn at(&self, previous_visits: u64) -> f64 {
        match *self {
            LearningRate::Constant { alpha } => alpha,
            LearningRate::Decaying { power } => (1.0 + previous_visits as f64).powf(-power),
        }
    }
}

/// Smoothed transition probability `P(s, a, s')`.
pub(crate) fn smoothed(row: &[f64], next: usize) -> f64 {
    (row[next] + PROBABILITY_SMOOTHING) / (1.0 + row.len() as f64 * PROBABILITY_SMOOTHING)
}
