//! Finite MDPs: representation, exact planning, action selection and
//! trajectory simulation.

mod model;
mod planning;
mod policy;
mod qtable;

pub use model::{ExperienceTuple, MdpModel, TrajectoryBuffer};
pub use planning::{
    discounted_return, greedy_policy, policy_evaluation, q_from_values, stationary_distribution,
    value_iteration, ValueIterationResult,
};
pub use policy::{select_action, PolicySpec};
pub(crate) use policy::epsilon_perturbed;
pub use qtable::{QTable, VisitCounts};

/// Index of the largest element, lowest index on ties. `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
