//! Scale elicitation for the Weibull smoothing-variance prior.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{BctmError, Result};
use crate::linalg::pinv_sqrt;
use crate::model::term::{TermDesign, RANK_TOL};

pub const MAX_BISECTION_STEPS: usize = 60;
const LOG_THETA_BOUNDS: (f64, f64) = (-30.0, 30.0);
const TOLERANCE: f64 = 0.005;

/// Monte Carlo draws of `tau^2 / theta` and `max_d |beta_d|^2 / tau^2` under the
/// prior `beta | tau^2 ~ N(0, tau^2 K^+)`; reused for every candidate `theta`.
pub struct ElicitationSample {
    /// `w_i * m_i^2` with `tau^2 = theta * w_i`; the criterion holds for draw
    /// `i` iff `theta * q_i <= c^2`.
    q: Vec<f64>,
}

impl ElicitationSample {
    pub fn draw(td: &TermDesign, n_sim: usize, seed: u64) -> Self {
        let omega = if td.samples_omega() { 0.5 } else { td.omega_grid[0] };
        let l = pinv_sqrt(&td.penalty(omega), RANK_TOL);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = l.ncols();
        let mut q = Vec::with_capacity(n_sim);
        for _ in 0..n_sim {
            let u: f64 = rand::Rng::random_range(&mut rng, f64::MIN_POSITIVE..1.0);
            // Weibull(shape 1/2, scale 1) by inversion
            let w = (-u.ln()).powi(2);
            let z = DVector::from_iterator(r, (0..r).map(|_| StandardNormal.sample(&mut rng)));
            let m = (&l * z).amax();
            q.push(w * m * m);
        }
        Self { q }
    }

    /// Monte Carlo estimate of `P(max_d |beta_d| <= c)` at scale `theta`.
    pub fn probability(&self, theta: f64, c: f64) -> f64 {
        let bound = c * c / theta;
        self.q.iter().filter(|&&q| q <= bound).count() as f64 / self.q.len() as f64
    }
}

/// Find `theta` with `P(max_d |beta_d| <= c) = 1 - alpha` by bisection on
/// `log theta`.
pub fn elicit_sd_scale(c: f64, alpha: f64, td: &TermDesign, n_sim: usize, seed: u64) -> Result<f64> {
    if !(c > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(BctmError::InvalidParameter(format!(
            "elicitation needs c > 0 and 0 < alpha < 1, got ({c}, {alpha})"
        )));
    }
    let sample = ElicitationSample::draw(td, n_sim, seed);
    bisect(&sample, c, 1.0 - alpha)
}

pub(crate) fn bisect(sample: &ElicitationSample, c: f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = LOG_THETA_BOUNDS;
    // probability is nonincreasing in theta
    if sample.probability(hi.exp(), c) >= target - TOLERANCE {
        log::warn!("scale criterion satisfied for every theta; using the upper bisection bound");
        return Ok(hi.exp());
    }
    if sample.probability(lo.exp(), c) < target - TOLERANCE {
        return Err(BctmError::ElicitationFailed { steps: 0 });
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let p = sample.probability(mid.exp(), c);
        if (p - target).abs() <= TOLERANCE {
            return Ok(mid.exp());
        }
        if p > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(BctmError::ElicitationFailed {
        steps: MAX_BISECTION_STEPS,
    })
}
