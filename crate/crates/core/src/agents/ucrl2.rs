//! UCRL2 with scheduled full restarts.

use super::{Controller, ControllerReport};
use crate::error::{Error, Result};
use crate::mdp::{argmax, ExperienceTuple};
use crate::rng::SimRng;

const MAX_EVI_ITERATIONS: usize = 100_000;

/// Result of extended value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticPlan {
    pub policy: Vec<usize>,
    /// Relative values of the last iterate, minimum shifted to zero.
    pub values: Vec<f64>,
    /// Optimistic average reward, the midpoint of the last span bracket.
    pub gain: f64,
    pub iterations: usize,
}

/// Most favourable distribution within L1 distance `radius` of `p_hat`:
/// shift mass toward the highest-value state, taking it from the lowest.
fn optimistic_row(p_hat: &[f64], radius: f64, order: &[usize]) -> Vec<f64> {
    let mut p = p_hat.to_vec();
    let best = order[0];
    p[best] = (p_hat[best] + radius / 2.0).min(1.0);
    let mut excess: f64 = p.iter().sum::<f64>() - 1.0;
    for &s in order.iter().rev() {
        if excess <= 0.0 {
            break;
        }
        if s == best {
            continue;
        }
        let take = excess.min(p[s]);
        p[s] -= take;
        excess -= take;
    }
    p
}

/// Extended value iteration for the average-reward optimistic model.
///
/// `p_hat` is `[s][a][s']` flattened, `r_upper` and `radius` are per pair.
/// Iterates until the span of successive differences drops below
/// `tolerance`.
pub fn extended_value_iteration(
    p_hat: &[f64],
    r_upper: &[f64],
    radius: &[f64],
    n_states: usize,
    n_actions: usize,
    tolerance: f64,
) -> Result<OptimisticPlan> {
    let pairs = n_states * n_actions;
    if p_hat.len() != pairs * n_states || r_upper.len() != pairs || radius.len() != pairs {
        return Err(Error::validation("estimate dimensions do not match |S| x |A|"));
    }
    let mut u: Vec<f64> = vec![0.0; n_states];
    let mut policy = vec![0; n_states];
    for it in 1..=MAX_EVI_ITERATIONS {
        let mut order: Vec<usize> = (0..n_states).collect();
        order.sort_by(|&a, &b| u[b].total_cmp(&u[a]));
        let mut next = vec![0.0; n_states];
        for s in 0..n_states {
            let q: Vec<f64> = (0..n_actions)
                .map(|a| {
                    let i = s * n_actions + a;
                    let row = optimistic_row(&p_hat[i * n_states..(i + 1) * n_states], radius[i], &order);
                    r_upper[i] + row.iter().zip(&u).map(|(p, v)| p * v).sum::<f64>()
                })
                .collect();
            policy[s] = argmax(&q).unwrap_or(0);
            next[s] = q[policy[s]];
        }
        let diff: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
        let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
        u = next.iter().map(|v| v - floor).collect();
        if hi - lo < tolerance {
            return Ok(OptimisticPlan { policy, values: u, gain: 0.5 * (hi + lo), iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_EVI_ITERATIONS, gradient_norm: f64::NAN, best: u })
}

/// Restart epochs `⌈i³ / ℓ²⌉`, `i = 1, 2, …`, below `horizon`, deduplicated.
pub fn restart_epochs(segments: usize, horizon: u64) -> Vec<u64> {
    let l2 = (segments.max(1) as f64).powi(2);
    let mut out: Vec<u64> = Vec::new();
    for i in 1u64.. {
        let t = ((i as f64).powi(3) / l2).ceil() as u64;
        if t >= horizon {
            break;
        }
        if out.last() != Some(&t) {
            out.push(t);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Ucrl2 {
    ns: usize,
    na: usize,
    delta: f64,
    /// Rewards lie in `[low, high]`.
    reward_range: (f64, f64),
    restarts: Vec<u64>,
    next_restart: usize,
    counts: Vec<u64>,
    episode_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    transitions: Vec<u64>,
    steps: u64,
    plan: Option<OptimisticPlan>,
    episodes: usize,
}

impl Ucrl2 {
    /// `restarts` lists the epochs at which every estimate is discarded.
    pub fn new(n_states: usize, n_actions: usize, delta: f64, reward_range: (f64, f64), restarts: Vec<u64>) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config("delta must lie in (0, 1)"));
        }
        if !(reward_range.0 < reward_range.1) {
            return Err(Error::config("reward range is empty"));
        }
        let pairs = n_states * n_actions;
        Ok(Ucrl2 {
            ns: n_states,
            na: n_actions,
            delta,
            reward_range,
            restarts,
            next_restart: 0,
            counts: vec![0; pairs],
            episode_counts: vec![0; pairs],
            reward_sums: vec![0.0; pairs],
            transitions: vec![0; pairs * n_states],
            steps: 0,
            plan: None,
            episodes: 0,
        })
    }

    /// Episodes started since construction, restarts included.
    pub fn episodes(&self) -> usize {
        self.episodes
    }

    pub fn plan(&self) -> Option<&OptimisticPlan> {
        self.plan.as_ref()
    }

    fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.episode_counts.iter_mut().for_each(|c| *c = 0);
        self.reward_sums.iter_mut().for_each(|c| *c = 0.0);
        self.transitions.iter_mut().for_each(|c| *c = 0);
        self.steps = 0;
        self.plan = None;
    }

    /// Optimistic plan from the current estimates.
    pub fn replan(&mut self) -> Result<()> {
        let (ns, na) = (self.ns, self.na);
        let (lo, hi) = self.reward_range;
        let t = self.steps.max(1) as f64;
        let log_term = (2.0 * (ns * na) as f64 * t / self.delta).ln();
        let mut p_hat = vec![0.0; ns * na * ns];
        let mut r_upper = vec![0.0; ns * na];
        let mut radius = vec![0.0; ns * na];
        for i in 0..ns * na {
            let n = self.counts[i];
            let nf = n.max(1) as f64;
            radius[i] = (14.0 * ns as f64 * log_term / nf).sqrt();
            let r_rad = (hi - lo) * (3.5 * log_term / nf).sqrt();
            if n == 0 {
                // Unvisited pairs: uniform guess, any kernel allowed, and a
                // reward bonus above every visited pair's.
                p_hat[i * ns..(i + 1) * ns].iter_mut().for_each(|p| *p = 1.0 / ns as f64);
                radius[i] = 2.0;
                r_upper[i] = hi + r_rad;
            } else {
                for s2 in 0..ns {
                    p_hat[i * ns + s2] = self.transitions[i * ns + s2] as f64 / nf;
                }
                // Left unclipped so that ties at the reward ceiling still favour
                // the less explored pairs.
                r_upper[i] = self.reward_sums[i] / nf + r_rad;
            }
        }
        let tolerance = 1.0 / t.sqrt();
        self.plan = Some(extended_value_iteration(&p_hat, &r_upper, &radius, ns, na, tolerance)?);
        self.episode_counts.iter_mut().for_each(|c| *c = 0);
        self.episodes += 1;
        Ok(())
    }
}

impl Controller for Ucrl2 {
    fn name(&self) -> &str {
        "UCRL2"
    }

    fn act(&mut self, state: usize, _rng: &mut SimRng) -> Result<usize> {
        if self.plan.is_none() {
            self.replan()?;
        }
        let a = self.plan.as_ref().map(|p| p.policy[state]).unwrap_or(0);
        let i = state * self.na + a;
        // The episode ends once some pair's in-episode count reaches its count
        // at the start of the episode.
        let before = self.counts[i] - self.episode_counts[i];
        if self.episode_counts[i] >= before.max(1) {
            self.replan()?;
            return Ok(self.plan.as_ref().map(|p| p.policy[state]).unwrap_or(0));
        }
        Ok(a)
    }

    fn observe(&mut self, tuple: &ExperienceTuple, action: usize, _rng: &mut SimRng) -> Result<()> {
        let i = tuple.state * self.na + action;
        self.episode_counts[i] += 1;
        self.counts[i] += 1;
        self.reward_sums[i] += tuple.reward;
        self.transitions[i * self.ns + tuple.next_state] += 1;
        self.steps += 1;
        let now = tuple.epoch + 1;
        while self.next_restart < self.restarts.len() && self.restarts[self.next_restart] <= now {
            if self.restarts[self.next_restart] == now {
                self.clear();
            }
            self.next_restart += 1;
        }
        Ok(())
    }

    fn start_episode(&mut self, _learning: bool) {
        self.clear();
        self.next_restart = 0;
    }

    fn report(&self) -> ControllerReport {
        ControllerReport::default()
    }
}
