//! Environment constructors and the scheduled non-stationary wrapper.

mod random;
mod schedule;
mod sensor;
mod traffic;

pub use random::{generate_random_mdp, generate_random_mdp_with, RewardRange};
pub use schedule::{ChangepointSchedule, NonStationaryEnv, StationaryEnv};
pub use sensor::{build_sensor_mdp, SensorConfig};
pub use traffic::{build_traffic_mdp, TrafficConfig, TrafficEnv, TrafficSim, N_LANES};

use crate::error::Result;
use crate::mdp::ExperienceTuple;
use crate::rng::SimRng;

/// A controllable process producing experience tuples.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    /// Current (observed) state.
    fn state(&self) -> usize;
    /// Epoch of the next step.
    fn clock(&self) -> u64;
    fn horizon(&self) -> u64;
    /// Index of the context generating the next step.
    fn active_context(&self) -> usize;
    /// Advance one epoch. Fails with [`crate::Error::EndOfEpisode`] at the horizon.
    fn step(&mut self, action: usize, rng: &mut SimRng) -> Result<ExperienceTuple>;
}

/// Poisson pmf `P(X = k)` for `k = 0..len`, computed by recurrence.
pub(crate) fn poisson_pmf(rate: f64, len: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(len);
    let mut p = (-rate).exp();
    for k in 0..len {
        pmf.push(p);
        p *= rate / (k + 1) as f64;
    }
    pmf
}

/// Distribution of `min(base + X, cap)` with `X ~ Poisson(rate)`, over `0..=cap`.
pub(crate) fn truncated_arrivals(base: usize, rate: f64, cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap + 1];
    if base >= cap {
        out[cap] = 1.0;
        return out;
    }
    let room = cap - base;
    let pmf = poisson_pmf(rate, room);
    let mut below = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        out[base + k] = *p;
        below += p;
    }
    out[cap] = (1.0 - below).max(0.0);
    out
}
