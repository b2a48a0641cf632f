//! Two-threshold Shiryaev-Roberts switching between two known contexts.

use serde::{Deserialize, Serialize};

use super::{smoothed, Controller, ControllerReport};
use crate::error::{Error, Result};
use crate::mdp::{argmax, value_iteration, ExperienceTuple, MdpModel, PolicySpec};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrPhase {
    /// `SR < B`: keep the pre-change optimal policy.
    FollowPi0,
    /// `B ≤ SR < A`: play the policy that separates the two contexts best.
    FollowPiKl,
    /// `SR ≥ A`: change declared, play the post-change optimal policy.
    FollowPi1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrState {
    pub statistic: f64,
    /// `B`.
    pub lower: f64,
    /// `A`.
    pub upper: f64,
    pub phase: SrPhase,
}

impl SrState {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower >= 0.0 && lower <= upper) {
            return Err(Error::config("SR thresholds need 0 <= B <= A"));
        }
        Ok(SrState { statistic: 0.0, lower, upper, phase: SrPhase::FollowPi0 })
    }

    pub fn phase_of(&self, statistic: f64) -> SrPhase {
        if statistic >= self.upper {
            SrPhase::FollowPi1
        } else if statistic >= self.lower {
            SrPhase::FollowPiKl
        } else {
            SrPhase::FollowPi0
        }
    }

    /// `SR ← (1 + SR) · ratio`.
    pub fn push_ratio(&mut self, ratio: f64) {
        self.statistic = (1.0 + self.statistic) * ratio;
        self.phase = self.phase_of(self.statistic);
    }

    pub fn reset(&mut self) {
        self.statistic = 0.0;
        self.phase = SrPhase::FollowPi0;
    }
}

fn check_tuple(model: &MdpModel, tuple: &ExperienceTuple, action: usize) -> Result<()> {
    if tuple.state >= model.n_states() || tuple.next_state >= model.n_states() || action >= model.n_actions() {
        return Err(Error::validation("tuple or action outside the model"));
    }
    Ok(())
}

/// SR recursion with the smoothed ratio `P1(s, a, s') / P0(s, a, s')`.
pub fn sr_update(state: &mut SrState, tuple: &ExperienceTuple, action: usize, p0: &MdpModel, p1: &MdpModel) -> Result<()> {
    if !p0.same_shape(p1) {
        return Err(Error::validation("models differ in shape"));
    }
    check_tuple(p0, tuple, action)?;
    let num = smoothed(p1.row(tuple.state, action), tuple.next_state);
    let den = smoothed(p0.row(tuple.state, action), tuple.next_state);
    state.push_ratio(num / den);
    Ok(())
}

/// `KL(P1(s, a, ·) ‖ P0(s, a, ·))` for every pair, flattened as `s · |A| + a`.
pub fn kl_table(p0: &MdpModel, p1: &MdpModel) -> Result<Vec<f64>> {
    if !p0.same_shape(p1) {
        return Err(Error::validation("models differ in shape"));
    }
    let mut out = Vec::with_capacity(p0.n_states() * p0.n_actions());
    for s in 0..p0.n_states() {
        for a in 0..p0.n_actions() {
            let (r0, r1) = (p0.row(s, a), p1.row(s, a));
            let kl: f64 = (0..r0.len())
                .map(|n| {
                    let q1 = smoothed(r1, n);
                    q1 * (q1 / smoothed(r0, n)).ln()
                })
                .sum();
            out.push(kl.max(0.0));
        }
    }
    Ok(out)
}

/// Per-state action with the largest divergence, lowest index on ties.
pub fn kl_policy(p0: &MdpModel, p1: &MdpModel) -> Result<PolicySpec> {
    let table = kl_table(p0, p1)?;
    let na = p0.n_actions();
    Ok(PolicySpec::Deterministic(
        table.chunks(na).map(|row| argmax(row).unwrap_or(0)).collect(),
    ))
}

pub(crate) fn optimal_policy(model: &MdpModel) -> Result<Vec<usize>> {
    match value_iteration(model, 1e-8)?.policy {
        PolicySpec::Deterministic(p) => Ok(p),
        _ => Err(Error::validation("value iteration returned a randomised policy")),
    }
}

/// Shiryaev-Roberts controller for an environment alternating between two
/// known contexts. After an alarm the hypotheses swap, so the next change
/// is back to the first context.
#[derive(Debug, Clone)]
pub struct SrSwitcher {
    name: String,
    contexts: [MdpModel; 2],
    optimal: [Vec<usize>; 2],
    /// `kl[c]` separates context `c` from the other one.
    kl: [Vec<usize>; 2],
    current: usize,
    state: SrState,
    detections: Vec<u64>,
    switches: Vec<u64>,
}

impl SrSwitcher {
    pub fn new(m0: MdpModel, m1: MdpModel, lower: f64, upper: f64) -> Result<Self> {
        let state = SrState::new(lower, upper)?;
        let kl_of = |a: &MdpModel, b: &MdpModel| match kl_policy(a, b)? {
            PolicySpec::Deterministic(p) => Ok::<_, Error>(p),
            _ => unreachable!(),
        };
        let kl = [kl_of(&m0, &m1)?, kl_of(&m1, &m0)?];
        let optimal = [optimal_policy(&m0)?, optimal_policy(&m1)?];
        Ok(SrSwitcher {
            name: format!("SR {upper}/{lower}"),
            contexts: [m0, m1],
            optimal,
            kl,
            current: 0,
            state,
            detections: Vec::new(),
            switches: Vec::new(),
        })
    }

    pub fn sr_state(&self) -> &SrState {
        &self.state
    }
}

impl Controller for SrSwitcher {
    fn name(&self) -> &str {
        &self.name
    }

    fn act(&mut self, state: usize, _rng: &mut SimRng) -> Result<usize> {
        let c = self.current;
        Ok(match self.state.phase {
            SrPhase::FollowPi0 => self.optimal[c][state],
            SrPhase::FollowPiKl => self.kl[c][state],
            SrPhase::FollowPi1 => self.optimal[1 - c][state],
        })
    }

    fn observe(&mut self, tuple: &ExperienceTuple, action: usize, _rng: &mut SimRng) -> Result<()> {
        let c = self.current;
        sr_update(&mut self.state, tuple, action, &self.contexts[c], &self.contexts[1 - c])?;
        if self.state.phase == SrPhase::FollowPi1 {
            self.detections.push(tuple.epoch);
            self.switches.push(tuple.epoch + 1);
            self.current = 1 - c;
            self.state.reset();
        }
        Ok(())
    }

    fn start_episode(&mut self, _learning: bool) {
        self.current = 0;
        self.state.reset();
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
