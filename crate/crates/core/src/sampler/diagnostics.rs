//! Effective sample size and per-chain summaries.

use serde::{Deserialize, Serialize};

/// Effective sample size of one chain by Geyer's initial monotone sequence
/// estimator.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 { c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let var0 = autocov(0);
    if !(var0 > 0.0) {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / var0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        prev_pair = pair;
        sum += pair;
        lag += 2;
    }
    // sum over pairs equals 1 + 2 * sum_{k>=1} rho_k plus rho_0 = 1
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10())
}

/// Diagnostics of one chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub seed: u64,
    /// Divergent transitions after warmup.
    pub divergences: usize,
    pub warmup_divergences: usize,
    /// Tree depth of every retained iteration.
    pub tree_depths: Vec<usize>,
    /// Step size used at every iteration.
    pub step_sizes: Vec<f64>,
    /// NUTS acceptance statistic of every retained iteration.
    pub accept_stats: Vec<f64>,
    pub leapfrog_steps: usize,
    /// Per-term acceptance rate of the `tau^2` random walk after warmup
    /// (`None` for terms without it).
    pub tau2_acceptance: Vec<Option<f64>>,
    /// Retained states with floored probabilities or densities.
    pub floored: usize,
    /// Retained states with clipped exponentiated coefficients.
    pub clipped: usize,
}

impl ChainDiagnostics {
    pub fn mean_accept_stat(&self) -> f64 {
        crate::linalg::mean(&self.accept_stats)
    }

    pub fn divergence_fraction(&self, post_warmup: usize) -> f64 {
        if post_warmup == 0 {
            0.0
        } else {
            self.divergences as f64 / post_warmup as f64
        }
    }
}
