use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MdpModel;

/// Interval for uniformly drawn rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRange {
    pub low: f64,
    pub high: f64,
}

impl Default for RewardRange {
    /// `[-1, 1]`, the range used by the MDPtoolbox random generator.
    fn default() -> Self {
        RewardRange { low: -1.0, high: 1.0 }
    }
}

/// Random context with dense Dirichlet(1, ..., 1) transition rows and
/// uniform rewards in the default [`RewardRange`].
pub fn generate_random_mdp<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    discount: f64,
    rng: &mut R,
) -> Result<MdpModel> {
    generate_random_mdp_with(n_states, n_actions, discount, RewardRange::default(), rng)
}

pub fn generate_random_mdp_with<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    discount: f64,
    rewards: RewardRange,
    rng: &mut R,
) -> Result<MdpModel> {
    if n_states < 2 || n_actions < 2 {
        return Err(Error::validation("random MDPs need at least two states and two actions"));
    }
    if !(rewards.low <= rewards.high) {
        return Err(Error::validation("reward range is empty"));
    }
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        // Normalised unit exponentials are uniform on the simplex.
        let row: Vec<f64> = (0..n_states)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = row.iter().sum();
        let start = transition.len();
        transition.extend(row.iter().map(|x| x / total));
        // Push the rounding residue into the largest entry.
        let residue = 1.0 - transition[start..].iter().sum::<f64>();
        let slot = start
            + transition[start..]
                .iter()
                .enumerate()
                .fold(0, |b, (i, p)| if *p > transition[start + b] { i } else { b });
        transition[slot] += residue;
    }
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rewards.low + (rewards.high - rewards.low) * rng.random::<f64>())
        .collect();
    let bound = rewards.low.abs().max(rewards.high.abs());
    MdpModel::from_flat(n_states, n_actions, transition, reward, discount, Some(bound))
}
