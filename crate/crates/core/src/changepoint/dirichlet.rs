//! Dirichlet maximum likelihood.
//!
//! The Dirichlet log-likelihood of `n` samples depends on the data only
//! through the mean log vector `m̄_k = (1/n) Σ_i ln x_ik`. Per sample,
//!
//! ```text
//! ℓ(α; m̄) = ln Γ(α₀) − Σ_k ln Γ(α_k) + Σ_k (α_k − 1) m̄_k,   α₀ = Σ_k α_k,
//! ```
//!
//! which is concave in `α`. The maximiser is found by Newton's method; the
//! Hessian is a diagonal plus a rank-one term, so each step costs `O(d)`.

use statrs::function::gamma::ln_gamma;

use super::CompositionalSample;
use crate::error::{Error, Result};

pub(crate) const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
/// Concentrations beyond this are treated as a degenerate (zero-variance) fit.
const MAX_CONCENTRATION: f64 = 1e7;

pub use statrs::function::gamma::digamma;

/// Derivative of the digamma function.
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + inv2 / 2.0
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}

/// Per-sample log-likelihood `ℓ(α; m̄)`.
pub(crate) fn ll_mean_log(alpha: &[f64], mean_log: &[f64]) -> f64 {
    let a0: f64 = alpha.iter().sum();
    let mut ll = ln_gamma(a0);
    for (a, m) in alpha.iter().zip(mean_log) {
        ll += (a - 1.0) * m - ln_gamma(*a);
    }
    ll
}

/// Total log-likelihood of `samples` under `Dirichlet(alpha)`.
pub fn dirichlet_log_likelihood(samples: &[CompositionalSample], alpha: &[f64]) -> Result<f64> {
    let mean_log = mean_log(samples)?;
    if alpha.len() != mean_log.len() || alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::validation("alpha must be positive with the samples' dimension"));
    }
    Ok(samples.len() as f64 * ll_mean_log(alpha, &mean_log))
}

fn mean_log(samples: &[CompositionalSample]) -> Result<Vec<f64>> {
    let d = samples
        .first()
        .ok_or_else(|| Error::validation("no samples"))?
        .dim();
    let mut m = vec![0.0; d];
    for s in samples {
        if s.dim() != d {
            return Err(Error::validation("samples differ in dimension"));
        }
        for (acc, x) in m.iter_mut().zip(s.as_slice()) {
            *acc += x.ln();
        }
    }
    let n = samples.len() as f64;
    m.iter_mut().for_each(|x| *x /= n);
    Ok(m)
}

/// Method-of-moments starting point: mean times a precision estimated from
/// the per-coordinate variances.
pub(crate) fn moment_start<'a, I>(rows: I, d: usize) -> Vec<f64>
where
    I: Iterator<Item = &'a [f64]>,
{
    let mut mean = vec![0.0; d];
    let mut sq = vec![0.0; d];
    let mut n = 0.0;
    for row in rows {
        for k in 0..d {
            mean[k] += row[k];
            sq[k] += row[k] * row[k];
        }
        n += 1.0;
    }
    let mut precision = Vec::with_capacity(d);
    for k in 0..d {
        mean[k] /= n;
        let var = sq[k] / n - mean[k] * mean[k];
        if var > 1e-300 {
            let s = mean[k] * (1.0 - mean[k]) / var - 1.0;
            if s.is_finite() && s > 0.0 {
                precision.push(s);
            }
        }
    }
    let s = if precision.is_empty() {
        1.0
    } else {
        precision.sort_by(f64::total_cmp);
        precision[precision.len() / 2].clamp(1e-3, MAX_CONCENTRATION)
    };
    mean.iter().map(|m| (m * s).max(1e-6)).collect()
}

/// Outcome of a Newton solve.
#[derive(Debug, Clone)]
pub(crate) struct Fit {
    pub alpha: Vec<f64>,
    pub ll: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximise `ℓ(·; mean_log)` from `start`, in place of `alpha`.
pub(crate) fn fit_mean_log(mean_log: &[f64], start: &[f64], tol: f64) -> Fit {
    let d = mean_log.len();
    let mut alpha = start.to_vec();
    let mut ll = ll_mean_log(&alpha, mean_log);
    let mut grad = vec![0.0; d];
    let mut q = vec![0.0; d];
    let mut step = vec![0.0; d];
    let mut gradient_norm = f64::INFINITY;
    for it in 0..MAX_ITER {
        let a0: f64 = alpha.iter().sum();
        let psi0 = digamma(a0);
        let mut norm2 = 0.0;
        for k in 0..d {
            grad[k] = psi0 - digamma(alpha[k]) + mean_log[k];
            norm2 += grad[k] * grad[k];
        }
        gradient_norm = norm2.sqrt();
        if a0 > MAX_CONCENTRATION {
            return Fit { alpha, ll, gradient_norm, iterations: it, converged: false };
        }
        if gradient_norm <= tol {
            return Fit { alpha, ll, gradient_norm, iterations: it, converged: true };
        }
        // Hessian H = z 11ᵀ − diag(q); Newton step solves H Δ = g.
        let z = trigamma(a0);
        let mut sum_gq = 0.0;
        let mut sum_invq = 0.0;
        for k in 0..d {
            q[k] = trigamma(alpha[k]);
            sum_gq += grad[k] / q[k];
            sum_invq += 1.0 / q[k];
        }
        let b = sum_gq / (sum_invq - 1.0 / z);
        for k in 0..d {
            step[k] = (grad[k] - b) / q[k];
        }
        // α_new = α + step (ascent); halve until positive and not worse.
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = alpha.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            if candidate.iter().all(|a| *a > 0.0) {
                let cand_ll = ll_mean_log(&candidate, mean_log);
                if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                    alpha = candidate;
                    ll = cand_ll;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Fit { alpha, ll, gradient_norm, iterations: MAX_ITER, converged: gradient_norm <= tol }
}

/// Maximum-likelihood Dirichlet parameters for `samples`.
///
/// Newton iterations start from the method-of-moments estimate and stop when
/// the per-sample gradient norm is at most 1e-8. Data without spread (for
/// instance a repeated sample) has no finite maximiser; the solver then
/// reports [`Error::NonConvergence`] carrying its last iterate.
pub fn dirichlet_mle(samples: &[CompositionalSample]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::validation("the Dirichlet MLE needs at least two samples"));
    }
    let m = mean_log(samples)?;
    let start = moment_start(samples.iter().map(|s| s.as_slice()), m.len());
    let fit = fit_mean_log(&m, &start, GRADIENT_TOL);
    if fit.converged {
        Ok(fit.alpha)
    } else {
        Err(Error::NonConvergence {
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            best: fit.alpha,
        })
    }
}
