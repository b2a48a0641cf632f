//! Batch detection on experience tuples.

use serde::{Deserialize, Serialize};

use super::ecp::ecp_detect;
use super::odcp::odcp_multiple;
use super::{DetectorConfig, Method, TupleEncoder};
use crate::error::Result;
use crate::mdp::ExperienceTuple;
use crate::rng::SimRng;

/// A changepoint located on the tuple clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleChange {
    /// First epoch of the new regime.
    pub epoch: u64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Each tuple as the point `(s, r, s')`.
pub fn tuple_points(tuples: &[ExperienceTuple]) -> Vec<[f64; 3]> {
    tuples
        .iter()
        .map(|t| [t.state as f64, t.reward, t.next_state as f64])
        .collect()
}

/// Settings for tests on individual tuples: the shortest segment is the
/// same number of tuples the windowed encoding would need.
pub(crate) fn per_tuple(config: &DetectorConfig) -> DetectorConfig {
    DetectorConfig {
        min_segment: config.min_segment * config.stride,
        ..config.clone()
    }
}

/// All changepoints of a tuple stream, in epoch order.
///
/// ODCP works on windowed compositional encodings of the tuples; ECP works
/// on the tuples themselves.
pub fn detect_tuples(
    method: Method,
    tuples: &[ExperienceTuple],
    n_states: usize,
    config: &DetectorConfig,
    rng: &mut SimRng,
) -> Result<Vec<TupleChange>> {
    let start = tuples.first().map_or(0, |t| t.epoch);
    let mut out: Vec<TupleChange> = match method {
        Method::Odcp => {
            let encoder = TupleEncoder::fit(tuples, n_states, None, config)?;
            let samples = encoder.encode(tuples)?;
            odcp_multiple(&samples, config, rng)?
                .changes
                .into_iter()
                .map(|c| TupleChange {
                    epoch: start + encoder.split_offset(c.index) as u64,
                    statistic: c.statistic,
                    p_value: c.p_value,
                })
                .collect()
        }
        Method::Ecp => ecp_detect(&tuple_points(tuples), &per_tuple(config), rng)?
            .changes
            .into_iter()
            .map(|c| TupleChange {
                epoch: start + c.index as u64,
                statistic: c.statistic,
                p_value: c.p_value,
            })
            .collect(),
    };
    out.sort_by_key(|c| c.epoch);
    Ok(out)
}
