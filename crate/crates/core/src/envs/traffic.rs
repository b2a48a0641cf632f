//! Four-lane signalised junction as a discrete queue model.
//!
//! Each decision epoch is one green phase: the agent picks its duration, the
//! green lane is served, every lane receives Poisson arrivals for the length
//! of the phase, and the signal moves to the next lane. Queues are hidden;
//! the agent observes each lane's queue aggregated to low / medium / high
//! together with the current phase, 3⁴ × 4 = 324 states in total.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{truncated_arrivals, ChangepointSchedule, Environment};
use crate::error::{Error, Result};
use crate::mdp::{ExperienceTuple, MdpModel};
use crate::rng::SimRng;

pub const N_LANES: usize = 4;
const N_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Queue truncation per lane, in vehicles.
    pub lane_capacity: usize,
    /// Mean arrivals per second on each lane.
    pub arrival_rates: [f64; N_LANES],
    /// Candidate green durations in seconds; the action indexes this list.
    pub green_durations: Vec<u32>,
    /// Vehicles cleared per green second.
    pub service_rate: f64,
    /// Queue fractions separating the low/medium and medium/high levels.
    pub aggregation_thresholds: (f64, f64),
    pub discount: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            lane_capacity: 30,
            arrival_rates: [0.05; N_LANES],
            green_durations: (20..=70).step_by(5).collect(),
            service_rate: 0.5,
            aggregation_thresholds: (1.0 / 3.0, 2.0 / 3.0),
            discount: 0.9,
        }
    }
}

impl TrafficConfig {
    pub fn with_rates(arrival_rates: [f64; N_LANES]) -> Self {
        TrafficConfig {
            arrival_rates,
            ..TrafficConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lane_capacity < N_LEVELS {
            return Err(Error::validation("lane capacity must be at least 3"));
        }
        if self.arrival_rates.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::validation("arrival rates must be positive"));
        }
        let expected: Vec<u32> = (20..=70).step_by(5).collect();
        if self.green_durations != expected {
            return Err(Error::validation("green durations must be 20, 25, ..., 70"));
        }
        if !(self.service_rate > 0.0) {
            return Err(Error::validation("service rate must be positive"));
        }
        let (lo, hi) = self.aggregation_thresholds;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::validation("aggregation thresholds must satisfy 0 < low < high < 1"));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        N_LEVELS.pow(N_LANES as u32) * N_LANES
    }

    pub fn n_actions(&self) -> usize {
        self.green_durations.len()
    }

    /// Smallest queues mapped to the medium and high levels.
    pub fn level_cutoffs(&self) -> (usize, usize) {
        let cap = self.lane_capacity as f64;
        let (lo, hi) = self.aggregation_thresholds;
        ((lo * cap - 1e-9).ceil() as usize, (hi * cap - 1e-9).ceil() as usize)
    }

    /// Aggregated level (0, 1 or 2) of a queue length.
    pub fn level(&self, queue: usize) -> usize {
        let (medium, high) = self.level_cutoffs();
        usize::from(queue >= medium) + usize::from(queue >= high)
    }

    /// Observed state index of `(queues, phase)`.
    pub fn observe(&self, queues: &[usize; N_LANES], phase: usize) -> usize {
        let code = queues
            .iter()
            .rev()
            .fold(0, |acc, &q| acc * N_LEVELS + self.level(q));
        phase * N_LEVELS.pow(N_LANES as u32) + code
    }

    /// `(levels, phase)` of an observed state index.
    pub fn decode(&self, state: usize) -> ([usize; N_LANES], usize) {
        let block = N_LEVELS.pow(N_LANES as u32);
        let mut code = state % block;
        let mut levels = [0; N_LANES];
        for l in levels.iter_mut() {
            *l = code % N_LEVELS;
            code /= N_LEVELS;
        }
        (levels, state / block)
    }

    fn served(&self, duration: u32) -> usize {
        (duration as f64 * self.service_rate).floor() as usize
    }

    /// Queue used to stand in for every queue of a level in the MDP facade.
    fn representative(&self, level: usize) -> usize {
        let (medium, high) = self.level_cutoffs();
        let (lo, hi) = match level {
            0 => (0, medium - 1),
            1 => (medium, high - 1),
            _ => (high, self.lane_capacity),
        };
        (lo + hi) / 2
    }
}

/// Exact queue simulator.
#[derive(Debug, Clone)]
pub struct TrafficSim {
    config: TrafficConfig,
    queues: [usize; N_LANES],
    phase: usize,
}

impl TrafficSim {
    pub fn new(config: TrafficConfig) -> Result<Self> {
        config.validate()?;
        Ok(TrafficSim {
            config,
            queues: [0; N_LANES],
            phase: 0,
        })
    }

    pub fn config(&self) -> &TrafficConfig {
        &self.config
    }

    pub fn queues(&self) -> &[usize; N_LANES] {
        &self.queues
    }

    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn observation(&self) -> usize {
        self.config.observe(&self.queues, self.phase)
    }

    /// Run one green phase under `rates`; returns the total queue afterwards.
    pub fn advance<R: Rng + ?Sized>(&mut self, action: usize, rates: &[f64; N_LANES], rng: &mut R) -> usize {
        let duration = self.config.green_durations[action];
        let lane = self.phase;
        self.queues[lane] -= self.queues[lane].min(self.config.served(duration));
        for (q, rate) in self.queues.iter_mut().zip(rates) {
            let mean = rate * duration as f64;
            let arrivals = if mean > 0.0 {
                Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
            } else {
                0
            };
            *q = (*q + arrivals).min(self.config.lane_capacity);
        }
        self.phase = (self.phase + 1) % N_LANES;
        self.queues.iter().sum()
    }
}

/// Junction whose arrival rates switch according to a schedule. Rewards are
/// the negated total queue after each phase.
#[derive(Debug, Clone)]
pub struct TrafficEnv {
    sim: TrafficSim,
    regimes: Vec<[f64; N_LANES]>,
    schedule: ChangepointSchedule,
    clock: u64,
}

impl TrafficEnv {
    pub fn new(config: TrafficConfig, regimes: Vec<[f64; N_LANES]>, schedule: ChangepointSchedule) -> Result<Self> {
        if regimes.iter().flatten().any(|r| !(*r >= 0.0)) {
            return Err(Error::validation("arrival rates must be non-negative"));
        }
        if let Some(bad) = schedule.contexts().iter().find(|&&c| c >= regimes.len()) {
            return Err(Error::validation(format!("schedule names unknown regime {bad}")));
        }
        Ok(TrafficEnv {
            sim: TrafficSim::new(config)?,
            regimes,
            schedule,
            clock: 0,
        })
    }

    pub fn sim(&self) -> &TrafficSim {
        &self.sim
    }
}

impl Environment for TrafficEnv {
    fn n_states(&self) -> usize {
        self.sim.config.n_states()
    }

    fn n_actions(&self) -> usize {
        self.sim.config.n_actions()
    }

    fn discount(&self) -> f64 {
        self.sim.config.discount
    }

    fn state(&self) -> usize {
        self.sim.observation()
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
        if action >= self.n_actions() {
            return Err(Error::validation("action out of range"));
        }
        let state = self.sim.observation();
        let rates = self.regimes[self.active_context()];
        let cost = self.sim.advance(action, &rates, rng);
        let tuple = ExperienceTuple {
            state,
            reward: -(cost as f64),
            next_state: self.sim.observation(),
            epoch: self.clock,
        };
        self.clock += 1;
        Ok(tuple)
    }
}

/// Aggregated MDP facade of the junction.
///
/// Every queue of a level is represented by the level's midpoint, lanes
/// evolve independently given the action, and the reward is the negated
/// expected total queue after the phase. The simulator's observed process is
/// only approximately this chain because the exact queues are hidden.
pub fn build_traffic_mdp(config: &TrafficConfig) -> Result<MdpModel> {
    config.validate()?;
    let ns = config.n_states();
    let na = config.n_actions();
    let cap = config.lane_capacity;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        let (levels, phase) = config.decode(s);
        for (a, &duration) in config.green_durations.iter().enumerate() {
            // Per-lane distribution over next levels, and expected next queue.
            let mut lane_levels = [[0.0; N_LEVELS]; N_LANES];
            let mut expected = 0.0;
            for lane in 0..N_LANES {
                let mut q = config.representative(levels[lane]);
                if lane == phase {
                    q -= q.min(config.served(duration));
                }
                let dist = truncated_arrivals(q, config.arrival_rates[lane] * duration as f64, cap);
                for (q2, p) in dist.iter().enumerate() {
                    lane_levels[lane][config.level(q2)] += p;
                    expected += q2 as f64 * p;
                }
            }
            reward[s * na + a] = -expected;
            let next_phase = (phase + 1) % N_LANES;
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            for code in 0..N_LEVELS.pow(N_LANES as u32) {
                let mut p = 1.0;
                let mut c = code;
                for dist in &lane_levels {
                    p *= dist[c % N_LEVELS];
                    c /= N_LEVELS;
                }
                row[next_phase * N_LEVELS.pow(N_LANES as u32) + code] = p;
            }
        }
    }
    MdpModel::from_flat(ns, na, transition, reward, config.discount, Some((N_LANES * cap) as f64))
}
