use nalgebra::{DMatrix, DVector};

use super::{MdpModel, PolicySpec, QTable};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub values: Vec<f64>,
    pub policy: PolicySpec,
    pub sweeps: usize,
}

/// Bellman backup `Q(s, a) = R(s, a) + γ Σ P(s, a, s') V(s')`.
pub fn q_from_values(model: &MdpModel, values: &[f64]) -> QTable {
    let (ns, na) = (model.n_states(), model.n_actions());
    let mut q = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let ev: f64 = model.row(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
            q.push(model.reward(s, a) + model.discount() * ev);
        }
    }
    QTable::from_values(ns, na, q)
}

/// Deterministic policy greedy with respect to `values`, lowest action on ties.
pub fn greedy_policy(model: &MdpModel, values: &[f64]) -> Vec<usize> {
    q_from_values(model, values).greedy()
}

/// Value iteration from `V = 0`.
///
/// Stops once successive sweeps differ by less than `tolerance (1-γ) / (2γ)`
/// in sup norm, which makes the greedy policy `tolerance`-optimal.
pub fn value_iteration(model: &MdpModel, tolerance: f64) -> Result<ValueIterationResult> {
    if !(tolerance > 0.0) {
        return Err(Error::validation("tolerance must be positive"));
    }
    let gamma = model.discount();
    let ns = model.n_states();
    let threshold = if gamma > 0.0 {
        tolerance * (1.0 - gamma) / (2.0 * gamma)
    } else {
        f64::INFINITY
    };
    let mut values = vec![0.0; ns];
    for sweep in 1..=MAX_SWEEPS {
        let q = q_from_values(model, &values);
        let next: Vec<f64> = (0..ns).map(|s| q.max(s)).collect();
        let delta = next
            .iter()
            .zip(&values)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        values = next;
        if delta < threshold || gamma == 0.0 {
            let policy = greedy_policy(model, &values);
            return Ok(ValueIterationResult {
                values,
                policy: PolicySpec::Deterministic(policy),
                sweeps: sweep,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_SWEEPS,
        gradient_norm: f64::NAN,
        best: values,
    })
}

fn deterministic_actions(model: &MdpModel, policy: &PolicySpec) -> Result<Vec<usize>> {
    match policy {
        PolicySpec::Deterministic(actions) => {
            if actions.len() != model.n_states() {
                return Err(Error::validation("policy must assign an action to every state"));
            }
            if let Some(a) = actions.iter().find(|&&a| a >= model.n_actions()) {
                return Err(Error::validation(format!("action {a} out of range")));
            }
            Ok(actions.clone())
        }
        _ => Err(Error::validation("policy evaluation needs a deterministic policy")),
    }
}

/// Exact `V^π` from the linear system `(I - γ P^π) V = R^π`.
pub fn policy_evaluation(model: &MdpModel, policy: &PolicySpec) -> Result<Vec<f64>> {
    let actions = deterministic_actions(model, policy)?;
    let ns = model.n_states();
    let gamma = model.discount();
    let mut a = DMatrix::<f64>::identity(ns, ns);
    let mut b = DVector::<f64>::zeros(ns);
    for (s, &act) in actions.iter().enumerate() {
        for (next, p) in model.row(s, act).iter().enumerate() {
            a[(s, next)] -= gamma * p;
        }
        b[s] = model.reward(s, act);
    }
    let v = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::validation("singular policy-evaluation system"))?;
    Ok(v.iter().copied().collect())
}

/// Stationary distribution of the chain induced by a deterministic policy.
///
/// Solves `ξ (P^π - I) = 0`, `Σ ξ = 1` by least squares, which also covers
/// chains with transient states. For reducible chains the answer is one of the
/// stationary distributions.
pub fn stationary_distribution(model: &MdpModel, policy: &[usize]) -> Result<Vec<f64>> {
    let ns = model.n_states();
    if policy.len() != ns {
        return Err(Error::validation("policy length differs from |S|"));
    }
    let mut chain = vec![0.0; ns * ns];
    for (s, &a) in policy.iter().enumerate() {
        chain[s * ns..(s + 1) * ns].copy_from_slice(model.row(s, a));
    }
    stationary_of_chain(&chain, ns)
}

/// Stationary distribution of a row-stochastic `n × n` matrix (row-major).
pub(crate) fn stationary_of_chain(chain: &[f64], n: usize) -> Result<Vec<f64>> {
    // Rows 0..n: (P^T - I) ξ = 0; row n: 1^T ξ = 1.
    let mut a = DMatrix::<f64>::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] += chain[i * n + j];
        }
        a[(i, i)] -= 1.0;
        a[(n, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[n] = 1.0;
    let normal = a.transpose() * &a;
    let target = a.transpose() * rhs;
    let xi = normal
        .lu()
        .solve(&target)
        .ok_or_else(|| Error::validation("stationary distribution system is singular"))?;
    let mut xi: Vec<f64> = xi.iter().map(|x| x.max(0.0)).collect();
    let total: f64 = xi.iter().sum();
    xi.iter_mut().for_each(|x| *x /= total);
    Ok(xi)
}

/// `Σ_t γ^t r_t`, `t` from zero.
pub fn discounted_return<I>(rewards: I, discount: f64) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut weight = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += weight * r;
        weight *= discount;
    }
    total
}
