//! Conditional updates of the smoothing variances and anisotropy weights.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::likelihood::log_prior_term;
use crate::linalg::log_sum_exp;
use crate::model::TermDesign;

/// Shape and rate of the inverse gamma full conditional of `tau^2` under an
/// `IG(a, b)` prior, using the unscaled penalty at `omega`.
pub fn ig_full_conditional(beta_j: &[f64], td: &TermDesign, omega: f64, a: f64, b: f64) -> (f64, f64) {
    let (q1, q2, _, _) = td.penalty_parts(beta_j);
    let quad = omega * q1 + (1.0 - omega) * q2;
    (a + 0.5 * td.rank_k as f64, b + 0.5 * quad)
}

/// Exact draw from the inverse gamma full conditional of `tau^2`.
pub fn gibbs_tau2_ig<R: Rng + ?Sized>(beta_j: &[f64], td: &TermDesign, omega: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    let (shape, rate) = ig_full_conditional(beta_j, td, omega, a, b);
    let g = Gamma::new(shape, 1.0 / rate).expect("positive inverse gamma parameters");
    1.0 / g.sample(rng)
}

/// Log density, on the `log tau^2` scale, targeted by [`mh_tau2_sd`].
pub fn sd_log_target(beta_j: &[f64], td: &TermDesign, theta: f64, omega: f64, log_tau2: f64) -> f64 {
    let tau2 = log_tau2.exp();
    if !(tau2 > 0.0 && tau2.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let weibull = crate::model::Hyperprior::ScaleDependent { theta }.log_density(tau2);
    weibull + log_prior_term(td, beta_j, tau2, omega, None) + log_tau2
}

/// Gaussian random-walk Metropolis-Hastings step on `log tau^2` for the
/// scale-dependent hyperprior. Returns the new value and whether the proposal
/// was accepted.
pub fn mh_tau2_sd<R: Rng + ?Sized>(
    beta_j: &[f64],
    td: &TermDesign,
    theta: f64,
    omega: f64,
    tau2: f64,
    proposal_sd: f64,
    rng: &mut R,
) -> (f64, bool) {
    let target = |l: f64| sd_log_target(beta_j, td, theta, omega, l);
    mh_log_scale(tau2, proposal_sd, target, rng)
}

/// Random-walk step on `log x` for a target given on the log scale.
pub fn mh_log_scale<F: Fn(f64) -> f64, R: Rng + ?Sized>(x: f64, proposal_sd: f64, log_target: F, rng: &mut R) -> (f64, bool) {
    let cur = x.ln();
    let z: f64 = StandardNormal.sample(rng);
    let prop = cur + proposal_sd * z;
    let log_ratio = log_target(prop) - log_target(cur);
    if log_ratio.is_finite() && rng.random::<f64>().ln() < log_ratio {
        (prop.exp(), true)
    } else {
        (x, false)
    }
}

/// Robbins-Monro tuning of a random-walk scale toward a target acceptance.
#[derive(Clone, Debug)]
pub struct ProposalScale {
    pub sd: f64,
    target: f64,
    n: usize,
    accepted: usize,
    proposed: usize,
}

impl ProposalScale {
    pub fn new(sd: f64, target: f64) -> Self {
        Self {
            sd,
            target,
            n: 0,
            accepted: 0,
            proposed: 0,
        }
    }

    pub fn record(&mut self, accepted: bool, adapt: bool) {
        self.proposed += 1;
        self.accepted += accepted as usize;
        if adapt {
            self.n += 1;
            let rate = (self.n as f64).powf(-0.6);
            let a = if accepted { 1.0 } else { 0.0 };
            self.sd = (self.sd.ln() + rate * (a - self.target)).exp().clamp(1e-3, 50.0);
        }
    }

    /// Clears the acceptance counters, e.g. at the end of warmup.
    pub fn reset_counts(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Normalized log-probabilities of the omega grid given `beta_j` and `tau^2`
/// under a uniform prior on the grid.
pub fn omega_log_weights(beta_j: &[f64], td: &TermDesign, tau2: f64) -> Vec<f64> {
    let (q1, q2, _, _) = td.penalty_parts(beta_j);
    let lw: Vec<f64> = td
        .omega_grid
        .iter()
        .enumerate()
        .map(|(g, &w)| 0.5 * td.logdet(tau2, g) - 0.5 * (w * q1 + (1.0 - w) * q2) / tau2)
        .collect();
    let norm = log_sum_exp(&lw);
    lw.into_iter().map(|v| v - norm).collect()
}

/// Categorical draw of omega from its discrete full conditional.
pub fn gibbs_omega<R: Rng + ?Sized>(beta_j: &[f64], td: &TermDesign, tau2: f64, rng: &mut R) -> f64 {
    if td.omega_grid.len() == 1 {
        return td.omega_grid[0];
    }
    let lw = omega_log_weights(beta_j, td, tau2);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (g, l) in lw.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return td.omega_grid[g];
        }
    }
    *td.omega_grid.last().expect("non-empty grid")
}
