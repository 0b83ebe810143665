//! Likelihood families, joint log posterior and its gradient in `beta`.

use nalgebra::DVector;

use crate::model::{ModelDesign, Observation, TermDesign, PRECISION_RIDGE};
use crate::reference::ReferenceDistribution;

/// `ln(1e-300)`: floor for log-probabilities and `log h'`.
pub const LOG_FLOOR: f64 = -690.775_527_898_213_7;
pub const H_PRIME_FLOOR: f64 = 1e-300;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `(beta, tau^2, omega)` with the global intercept first in `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterState {
    pub beta: Vec<f64>,
    pub tau2: Vec<f64>,
    pub omega: Vec<f64>,
}

impl ParameterState {
    /// Initial coefficients from [`ModelDesign::initial_beta`], `tau^2 = 1`
    /// and the middle of each omega grid.
    pub fn initial(design: &ModelDesign) -> Self {
        Self {
            beta: design.initial_beta(),
            tau2: vec![1.0; design.terms.len()],
            omega: design.terms.iter().map(|t| t.omega_grid[t.omega_grid.len() / 2]).collect(),
        }
    }
}

/// Counters for guarded numerical events during one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalDiagnostics {
    /// Probabilities or derivatives floored at `1e-300`.
    pub floored: usize,
    /// Coefficients clipped before exponentiation.
    pub clipped: usize,
}

impl std::ops::AddAssign for EvalDiagnostics {
    fn add_assign(&mut self, o: Self) {
        self.floored += o.floored;
        self.clipped += o.clipped;
    }
}

/// Per-row `log f_Z(h) + log h'`, with `h'` floored.
pub fn loglik_exact(h: &[f64], h_prime: &[f64], dist: ReferenceDistribution) -> Vec<f64> {
    h.iter()
        .zip(h_prime)
        .map(|(&z, &d)| dist.log_pdf(z) + d.max(H_PRIME_FLOOR).ln())
        .collect()
}

/// `log P(lower < Z <= upper)` for transformed bounds (missing bounds are
/// infinite), with derivatives in the lower and upper bound. The boolean flags
/// a floored probability.
pub fn log_interval(dist: ReferenceDistribution, lower: Option<f64>, upper: Option<f64>) -> (f64, f64, f64, bool) {
    let (ll, dlo, dhi) = match (lower, upper) {
        (None, None) => return (0.0, 0.0, 0.0, false),
        (None, Some(b)) => {
            let ll = dist.log_cdf(b);
            (ll, 0.0, (dist.log_pdf(b) - ll).exp())
        }
        (Some(a), None) => {
            let ll = dist.log_sf(a);
            (ll, -(dist.log_pdf(a) - ll).exp(), 0.0)
        }
        (Some(a), Some(b)) => {
            if !(b > a) {
                return (LOG_FLOOR, 0.0, 0.0, true);
            }
            // upper tail in survivor form to avoid cancellation
            let ll = if dist.cdf(a) > 0.5 {
                crate::linalg::log_diff_exp(dist.log_sf(a), dist.log_sf(b))
            } else {
                crate::linalg::log_diff_exp(dist.log_cdf(b), dist.log_cdf(a))
            };
            (ll, -(dist.log_pdf(a) - ll).exp(), (dist.log_pdf(b) - ll).exp())
        }
    };
    if !ll.is_finite() || ll < LOG_FLOOR {
        return (LOG_FLOOR, 0.0, 0.0, true);
    }
    (ll, dlo, dhi, false)
}

/// Per-row log-likelihood of bounded observations given transformed bounds.
pub fn loglik_bounded(lower: &[Option<f64>], upper: &[Option<f64>], dist: ReferenceDistribution) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&a, &b)| log_interval(dist, a, b).0)
        .collect()
}

/// Log-likelihood of every observation at `beta`.
pub fn row_log_likelihood(design: &ModelDesign, beta: &[f64]) -> Vec<f64> {
    let (h, hp) = design.transform(beta, &design.sites);
    let dist = design.reference;
    design
        .observations
        .iter()
        .map(|obs| match *obs {
            Observation::Exact { site } => dist.log_pdf(h[site]) + hp[site].max(H_PRIME_FLOOR).ln(),
            Observation::Bounded { lower, upper } => {
                log_interval(dist, lower.map(|s| h[s]), upper.map(|s| h[s])).0
            }
        })
        .collect()
}

/// Total log-likelihood and, on request, its gradient in `beta`.
pub fn log_likelihood(design: &ModelDesign, beta: &[f64], want_grad: bool) -> (f64, Option<DVector<f64>>, EvalDiagnostics) {
    let (bt, cdiag, clipped) = design.beta_tilde(beta);
    let h = &design.sites.u * &bt;
    let hp = &design.sites.up * &bt;
    let dist = design.reference;
    let mut diag = EvalDiagnostics {
        floored: 0,
        clipped,
    };
    let ns = design.nsites();
    let mut gh = DVector::zeros(if want_grad { ns } else { 0 });
    let mut ghp = DVector::zeros(if want_grad { ns } else { 0 });
    let mut total = 0.0;
    for obs in &design.observations {
        match *obs {
            Observation::Exact { site } => {
                let d = hp[site];
                let floored = !(d > H_PRIME_FLOOR);
                diag.floored += floored as usize;
                total += dist.log_pdf(h[site]) + d.max(H_PRIME_FLOOR).ln();
                if want_grad {
                    gh[site] += dist.dlog_pdf(h[site]);
                    if !floored {
                        ghp[site] += 1.0 / d;
                    }
                }
            }
            Observation::Bounded { lower, upper } => {
                let (ll, dlo, dhi, floored) = log_interval(dist, lower.map(|s| h[s]), upper.map(|s| h[s]));
                diag.floored += floored as usize;
                total += ll;
                if want_grad {
                    if let Some(s) = lower {
                        gh[s] += dlo;
                    }
                    if let Some(s) = upper {
                        gh[s] += dhi;
                    }
                }
            }
        }
    }
    if !want_grad {
        return (total, None, diag);
    }
    let mut grad = design.sites.u.tr_mul(&gh);
    grad += design.sites.up.tr_mul(&ghp);
    grad.component_mul_assign(&cdiag);
    (total, Some(grad), diag)
}

/// `log pi(beta_j | tau2, omega)` including the normalizing determinant, and
/// optionally adds its gradient to `grad`.
pub fn log_prior_term(td: &TermDesign, beta_j: &[f64], tau2: f64, omega: f64, grad: Option<&mut [f64]>) -> f64 {
    let (q1, q2, p1b, p2b) = td.penalty_parts(beta_j);
    let norm2: f64 = beta_j.iter().map(|b| b * b).sum();
    let quad = (omega * q1 + (1.0 - omega) * q2) / tau2 + PRECISION_RIDGE * norm2;
    let idx = td.omega_index(omega).unwrap_or_else(|| panic!("omega {omega} not on the grid of `{}`", td.name));
    let logdet = td.logdet(tau2, idx);
    if let Some(g) = grad {
        for k in 0..beta_j.len() {
            g[k] -= (omega * p1b[k] + (1.0 - omega) * p2b[k]) / tau2 + PRECISION_RIDGE * beta_j[k];
        }
    }
    0.5 * logdet - 0.5 * quad - 0.5 * beta_j.len() as f64 * LN_2PI
}

/// Log prior of `(tau^2, omega)` for term `j`.
pub fn log_hyperprior_term(td: &TermDesign, tau2: f64) -> f64 {
    let mut lp = 0.0;
    if td.samples_tau2() {
        lp += td.hyperprior.log_density(tau2);
    }
    if td.samples_omega() {
        lp -= (td.omega_grid.len() as f64).ln();
    }
    lp
}

/// Log prior of all coefficients given `(tau^2, omega)`, plus gradient.
pub fn log_prior_beta(design: &ModelDesign, state: &ParameterState, mut grad: Option<&mut [f64]>) -> f64 {
    let mut total = 0.0;
    for (j, td) in design.terms.iter().enumerate() {
        let r = design.term_range(j);
        let g = grad.as_deref_mut().map(|g| &mut g[r.clone()]);
        total += log_prior_term(td, &state.beta[r], state.tau2[j], state.omega[j], g);
    }
    total
}

/// Unnormalized joint log posterior of `(beta, tau^2, omega)`; `beta_0` has a
/// flat prior.
pub fn log_posterior(state: &ParameterState, design: &ModelDesign) -> f64 {
    let (ll, _, _) = log_likelihood(design, &state.beta, false);
    let mut lp = ll + log_prior_beta(design, state, None);
    for (j, td) in design.terms.iter().enumerate() {
        lp += log_hyperprior_term(td, state.tau2[j]);
    }
    lp
}

/// Gradient of the log posterior in `beta`.
pub fn grad_beta(state: &ParameterState, design: &ModelDesign) -> Vec<f64> {
    log_posterior_beta(design, &state.beta, &state.tau2, &state.omega).1
}

/// Log of `p(beta | tau^2, omega, y)` up to a constant, with gradient.
pub fn log_posterior_beta(design: &ModelDesign, beta: &[f64], tau2: &[f64], omega: &[f64]) -> (f64, Vec<f64>, EvalDiagnostics) {
    let (ll, grad, diag) = log_likelihood(design, beta, true);
    let mut grad: Vec<f64> = grad.expect("gradient requested").as_slice().to_vec();
    let mut lp = ll;
    for (j, td) in design.terms.iter().enumerate() {
        let r = design.term_range(j);
        lp += log_prior_term(td, &beta[r.clone()], tau2[j], omega[j], Some(&mut grad[r]));
    }
    (lp, grad, diag)
}
