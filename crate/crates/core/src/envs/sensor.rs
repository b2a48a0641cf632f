//! Energy-harvesting sensor node.
//!
//! The node holds `e` energy units and `d` queued data units. Spending `T`
//! energy units transmits `g(T) = ⌊κ ln(1 + T)⌋` data units; afterwards new
//! energy and data arrive (Poisson, truncated at the buffer sizes). The cost
//! of a step is the data left queued after transmission.

use serde::{Deserialize, Serialize};

use super::truncated_arrivals;
use crate::error::{Error, Result};
use crate::mdp::MdpModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub energy_capacity: usize,
    pub data_capacity: usize,
    /// Mean energy units harvested per epoch.
    pub lambda_e: f64,
    /// Mean data units arriving per epoch.
    pub lambda_d: f64,
    pub max_transmit: usize,
    /// κ in the throughput curve.
    pub throughput_scale: f64,
    pub discount: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            energy_capacity: 10,
            data_capacity: 10,
            lambda_e: 0.5,
            lambda_d: 1.0,
            max_transmit: 5,
            throughput_scale: 3.0,
            discount: 0.9,
        }
    }
}

impl SensorConfig {
    /// Default node with harvesting rate `lambda_e`.
    pub fn with_harvest(lambda_e: f64) -> Self {
        SensorConfig {
            lambda_e,
            ..SensorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.energy_capacity < 1 || self.data_capacity < 1 {
            return Err(Error::validation("sensor buffers need capacity >= 1"));
        }
        if !(self.lambda_e > 0.0 && self.lambda_d > 0.0) {
            return Err(Error::validation("sensor arrival rates must be positive"));
        }
        if !(self.throughput_scale > 0.0) {
            return Err(Error::validation("throughput scale must be positive"));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        (self.energy_capacity + 1) * (self.data_capacity + 1)
    }

    pub fn state_index(&self, energy: usize, data: usize) -> usize {
        energy * (self.data_capacity + 1) + data
    }

    /// `(energy, data)` levels of a state index.
    pub fn levels(&self, state: usize) -> (usize, usize) {
        (state / (self.data_capacity + 1), state % (self.data_capacity + 1))
    }

    /// Data units sent by spending `units` of energy.
    pub fn throughput(&self, units: usize) -> usize {
        (self.throughput_scale * (1.0 + units as f64).ln()).floor() as usize
    }

    /// Data queued after acting with `action` in `(energy, data)`, and the
    /// energy actually spent.
    fn transmit(&self, energy: usize, data: usize, action: usize) -> (usize, usize) {
        let spent = action.min(energy);
        (data.saturating_sub(self.throughput(spent)), spent)
    }
}

/// Exact transition and reward tables of the sensor node. Rewards are the
/// negated per-step cost.
pub fn build_sensor_mdp(config: &SensorConfig) -> Result<MdpModel> {
    config.validate()?;
    let (emax, dmax) = (config.energy_capacity, config.data_capacity);
    let ns = config.n_states();
    let na = config.max_transmit + 1;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for e in 0..=emax {
        for d in 0..=dmax {
            let s = config.state_index(e, d);
            for a in 0..na {
                let (left, spent) = config.transmit(e, d, a);
                reward[s * na + a] = -(left as f64);
                let energy_next = truncated_arrivals(e - spent, config.lambda_e, emax);
                let data_next = truncated_arrivals(left, config.lambda_d, dmax);
                let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
                for (e2, pe) in energy_next.iter().enumerate() {
                    if *pe == 0.0 {
                        continue;
                    }
                    for (d2, pd) in data_next.iter().enumerate() {
                        row[config.state_index(e2, d2)] += pe * pd;
                    }
                }
            }
        }
    }
    MdpModel::from_flat(ns, na, transition, reward, config.discount, Some(dmax as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{stationary_distribution, value_iteration, PolicySpec};
    use crate::rng::stream;

    #[test]
    fn throughput_curve() {
        for k in [0.5, 1.0, 3.0, 10.0] {
            let c = SensorConfig {
                throughput_scale: k,
                ..SensorConfig::default()
            };
            assert_eq!(c.throughput(0), 0);
        }
        let c = SensorConfig::default();
        let g: Vec<usize> = (0..=5).map(|t| c.throughput(t)).collect();
        assert_eq!(g, vec![0, 2, 3, 4, 4, 5]);
    }

    #[test]
    fn empty_buffer_costs_nothing() {
        let c = SensorConfig::default();
        let m = build_sensor_mdp(&c).unwrap();
        for e in 0..=c.energy_capacity {
            for a in 0..m.n_actions() {
                assert_eq!(m.reward(c.state_index(e, 0), a), 0.0);
            }
        }
    }

    #[test]
    fn infeasible_transmission_is_clamped() {
        let c = SensorConfig::default();
        let m = build_sensor_mdp(&c).unwrap();
        let s = c.state_index(1, 6);
        for a in 1..m.n_actions() {
            assert_eq!(m.reward(s, a), m.reward(s, 1));
            assert_eq!(m.row(s, a), m.row(s, 1));
        }
    }

    #[test]
    fn rows_are_stochastic() {
        for lam in [0.5, 2.0] {
            let m = build_sensor_mdp(&SensorConfig::with_harvest(lam)).unwrap();
            assert_eq!(m.n_states(), 121);
            assert_eq!(m.n_actions(), 6);
            for s in 0..m.n_states() {
                for a in 0..m.n_actions() {
                    assert!((m.row(s, a).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    /// Long-run mean cost under the optimal policy: exact chain solve against
    /// a million simulated steps.
    #[test]
    fn stationary_cost_matches_simulation() {
        let m = build_sensor_mdp(&SensorConfig::default()).unwrap();
        let vi = value_iteration(&m, 1e-8).unwrap();
        let PolicySpec::Deterministic(pi) = vi.policy else {
            unreachable!()
        };
        let xi = stationary_distribution(&m, &pi).unwrap();
        let exact: f64 = (0..m.n_states()).map(|s| -xi[s] * m.reward(s, pi[s])).sum();

        let mut rng = stream(21, 0);
        let mut s = 0;
        let n = 1_000_000;
        let mut total = 0.0;
        for _ in 0..n {
            let (next, r) = m.step(s, pi[s], &mut rng);
            total -= r;
            s = next;
        }
        let simulated = total / n as f64;
        assert!(exact > 0.0);
        assert!((simulated - exact).abs() <= 0.01 * exact, "{simulated} vs {exact}");
    }

    #[test]
    fn more_harvest_never_costs_more() {
        let low = build_sensor_mdp(&SensorConfig::with_harvest(0.5)).unwrap();
        let high = build_sensor_mdp(&SensorConfig::with_harvest(2.0)).unwrap();
        let v_low = value_iteration(&low, 1e-8).unwrap().values;
        let v_high = value_iteration(&high, 1e-8).unwrap().values;
        for (a, b) in v_low.iter().zip(&v_high) {
            assert!(b + 1e-6 >= *a);
        }
    }
}
