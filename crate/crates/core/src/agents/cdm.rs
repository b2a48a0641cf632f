//! Block likelihood-ratio change detection on policy-induced chains, with
//! the clamped sign-counting statistic `m_i = max(0, m_{i-1} + sign(l_i))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sr::optimal_policy;
use super::{smoothed, Controller, ControllerReport};
use crate::error::{Error, Result};
use crate::mdp::{stationary_distribution, ExperienceTuple, MdpModel};
use crate::rng::SimRng;

/// How the state sequence is cut into non-overlapping blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockRule {
    /// Contiguous blocks of a fixed length from phase zero.
    Periodic { length: usize },
    /// Block lengths drawn uniformly from `min..=max`.
    Random { min: usize, max: usize },
}

impl BlockRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BlockRule::Periodic { length } if length == 0 => Err(Error::config("block length must be positive")),
            BlockRule::Random { min, max } if min == 0 || min > max => {
                Err(Error::config("random block lengths need 1 <= min <= max"))
            }
            _ => Ok(()),
        }
    }

    pub fn next_length<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            BlockRule::Periodic { length } => length,
            BlockRule::Random { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub m: u64,
    /// `K`.
    pub threshold: u64,
    /// Stationary distributions of the two policy-induced chains.
    pub stationary: [Vec<f64>; 2],
}

impl CusumState {
    pub fn new(threshold: u64, xi0: Vec<f64>, xi1: Vec<f64>) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::config("threshold K must be positive"));
        }
        if xi0.len() != xi1.len() {
            return Err(Error::validation("stationary distributions differ in length"));
        }
        Ok(CusumState { m: 0, threshold, stationary: [xi0, xi1] })
    }

    /// Apply one block score. Returns true when `m` reaches the threshold.
    pub fn push_score(&mut self, l: f64) -> bool {
        if l > 0.0 {
            self.m += 1;
        } else if l < 0.0 {
            self.m = self.m.saturating_sub(1);
        }
        self.m >= self.threshold
    }
}

/// Log-likelihood ratio of a block under the chain `(P1, π1)` against
/// `(P0, π0)`, each started from its stationary law.
pub fn block_score(
    block: &[usize],
    xi: &[Vec<f64>; 2],
    models: [&MdpModel; 2],
    policies: [&[usize]; 2],
) -> Result<f64> {
    let (&first, _) = block.split_first().ok_or_else(|| Error::validation("empty block"))?;
    let ns = models[0].n_states();
    if block.iter().any(|&s| s >= ns) {
        return Err(Error::validation("block state outside the model"));
    }
    let start = |j: usize| (xi[j][first] + super::PROBABILITY_SMOOTHING).ln();
    let mut l = start(1) - start(0);
    for w in block.windows(2) {
        let (s, next) = (w[0], w[1]);
        let p1 = smoothed(models[1].row(s, policies[1][s]), next);
        let p0 = smoothed(models[0].row(s, policies[0][s]), next);
        l += p1.ln() - p0.ln();
    }
    Ok(l)
}

/// Score `block` and update `state`; true signals a change.
pub fn cdm_step(
    state: &mut CusumState,
    block: &[usize],
    p0: &MdpModel,
    p1: &MdpModel,
    pi0: &[usize],
    pi1: &[usize],
) -> Result<bool> {
    let l = block_score(block, &state.stationary, [p0, p1], [pi0, pi1])?;
    Ok(state.push_score(l))
}

/// Plays the optimal policy of the context believed active and runs the
/// block detector against the other context; the two contexts alternate.
///
/// Both hypotheses are scored under the policy actually played: until the
/// alarm the agent keeps following `π*` of the believed context, so the
/// post-change chain is the other context's kernel under that policy.
#[derive(Debug, Clone)]
pub struct CdmSwitcher {
    name: String,
    contexts: [MdpModel; 2],
    optimal: [Vec<usize>; 2],
    /// `xi[c]`: stationary laws of context `c` and of the other context,
    /// both under `π*` of context `c`.
    xi: [[Vec<f64>; 2]; 2],
    rule: BlockRule,
    current: usize,
    state: CusumState,
    block: Vec<usize>,
    block_len: usize,
    detections: Vec<u64>,
    switches: Vec<u64>,
}

impl CdmSwitcher {
    pub fn new(m0: MdpModel, m1: MdpModel, threshold: u64, rule: BlockRule) -> Result<Self> {
        rule.validate()?;
        if !m0.same_shape(&m1) {
            return Err(Error::validation("models differ in shape"));
        }
        let optimal = [optimal_policy(&m0)?, optimal_policy(&m1)?];
        let xi = [
            [stationary_distribution(&m0, &optimal[0])?, stationary_distribution(&m1, &optimal[0])?],
            [stationary_distribution(&m1, &optimal[1])?, stationary_distribution(&m0, &optimal[1])?],
        ];
        let state = CusumState::new(threshold, xi[0][0].clone(), xi[0][1].clone())?;
        let name = match rule {
            BlockRule::Periodic { .. } => format!("P-CDM K={threshold}"),
            BlockRule::Random { .. } => format!("NP-CDM K={threshold}"),
        };
        Ok(CdmSwitcher {
            name,
            contexts: [m0, m1],
            optimal,
            xi,
            rule,
            current: 0,
            state,
            block: Vec::new(),
            block_len: 0,
            detections: Vec::new(),
            switches: Vec::new(),
        })
    }

    fn hypotheses(&mut self) {
        let c = self.current;
        self.state.m = 0;
        self.state.stationary = self.xi[c].clone();
        self.block.clear();
        self.block_len = 0;
    }
}

impl Controller for CdmSwitcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: usize, _rng: &mut SimRng) -> Result<usize> {
        Ok(self.optimal[self.current][state])
    }

    fn observe(&mut self, tuple: &ExperienceTuple, _action: usize, rng: &mut SimRng) -> Result<()> {
        if self.block_len == 0 {
            self.block_len = self.rule.next_length(rng);
        }
        self.block.push(tuple.state);
        if self.block.len() < self.block_len {
            return Ok(());
        }
        let c = self.current;
        let fired = cdm_step(
            &mut self.state,
            &self.block,
            &self.contexts[c],
            &self.contexts[1 - c],
            &self.optimal[c],
            &self.optimal[c],
        )?;
        self.block.clear();
        self.block_len = 0;
        if fired {
            self.detections.push(tuple.epoch);
            self.switches.push(tuple.epoch + 1);
            self.current = 1 - c;
            self.hypotheses();
        }
        Ok(())
    }

    fn start_episode(&mut self, _learning: bool) {
        self.current = 0;
        self.hypotheses();
        self.detections.clear();
        self.switches.clear();
    }

    fn report(&self) -> ControllerReport {
        ControllerReport {
            detections: self.detections.clone(),
            switches: self.switches.clone(),
            ..ControllerReport::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn positive_scores_climb_to_threshold() {
        let mut s = CusumState::new(5, vec![1.0], vec![1.0]).unwrap();
        for i in 1..=4 {
            assert!(!s.push_score(0.3));
            assert_eq!(s.m, i);
        }
        assert!(s.push_score(0.3));
    }

    #[test]
    fn clamp_holds_under_negative_runs() {
        let mut s = CusumState::new(3, vec![1.0], vec![1.0]).unwrap();
        s.push_score(1.0);
        for _ in 0..100 {
            s.push_score(-1.0);
            assert_eq!(s.m, 0);
        }
        s.push_score(0.0);
        assert_eq!(s.m, 0);
    }

    #[test]
    fn block_score_matches_direct_product() {
        let mut rng = stream(5, 0);
        let m0 = crate::envs::generate_random_mdp(3, 2, 0.9, &mut rng).unwrap();
        let m1 = crate::envs::generate_random_mdp(3, 2, 0.9, &mut rng).unwrap();
        let (pi0, pi1) = (vec![0, 1, 0], vec![1, 1, 0]);
        let xi = [vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]];
        let block = [2, 0, 1, 1];
        let mut like = [xi[0][2], xi[1][2]];
        for w in block.windows(2) {
            like[0] *= smoothed(m0.row(w[0], pi0[w[0]]), w[1]);
            like[1] *= smoothed(m1.row(w[0], pi1[w[0]]), w[1]);
        }
        let l = block_score(&block, &xi, [&m0, &m1], [&pi0, &pi1]).unwrap();
        assert!((l - (like[1] / like[0]).ln()).abs() < 1e-4);
        assert!(block_score(&[], &xi, [&m0, &m1], [&pi0, &pi1]).is_err());
    }

    #[test]
    fn random_block_lengths_stay_in_range() {
        let rule = BlockRule::Random { min: 2, max: 4 };
        let mut rng = stream(6, 0);
        let mut seen = [false; 5];
        for _ in 0..200 {
            let l = rule.next_length(&mut rng);
            assert!((2..=4).contains(&l));
            seen[l] = true;
        }
        assert!(seen[2] && seen[3] && seen[4]);
        assert!(BlockRule::Random { min: 3, max: 2 }.validate().is_err());
    }
}
