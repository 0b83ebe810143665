//! Accuracy measures for estimated conditional distributions.

use crate::data::Covariates;
use crate::error::{BctmError, Result};

/// Default number of interior probability levels in [`crps`].
pub const DEFAULT_CRPS_LEVELS: usize = 199;

/// Response grid crossed with covariate rows, optionally with the true cdf
/// (`true_cdf[row][k]` at `y[k]`).
#[derive(Clone, Debug)]
pub struct EvaluationGrid {
    pub y: Vec<f64>,
    pub covariates: Covariates,
    pub true_cdf: Option<Vec<Vec<f64>>>,
}

impl EvaluationGrid {
    pub fn new(y: Vec<f64>, covariates: Covariates, true_cdf: Option<Vec<Vec<f64>>>) -> Result<Self> {
        if let Some(t) = &true_cdf {
            if t.len() != covariates.nrows() {
                return Err(BctmError::RowMismatch {
                    left: t.len(),
                    right: covariates.nrows(),
                });
            }
            for row in t {
                if row.len() != y.len() {
                    return Err(BctmError::LengthMismatch {
                        left: row.len(),
                        right: y.len(),
                    });
                }
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(BctmError::InvalidData("true cdf values must lie in [0, 1]".into()));
                }
            }
        }
        Ok(Self { y, covariates, true_cdf })
    }

    pub fn len(&self) -> usize {
        self.y.len() * self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn same_length(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(BctmError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(BctmError::InvalidData("empty input".into()));
    }
    Ok(())
}

/// Mean absolute deviation between two probability vectors.
pub fn mad(true_cdf: &[f64], est_cdf: &[f64]) -> Result<f64> {
    same_length(true_cdf.len(), est_cdf.len())?;
    Ok(true_cdf.iter().zip(est_cdf).map(|(a, b)| (a - b).abs()).sum::<f64>() / true_cdf.len() as f64)
}

/// Pinball loss `2 (1{y < q} - alpha) (q - y)`.
pub fn quantile_score(q: f64, y: f64, alpha: f64) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let ind = if y < q { 1.0 } else { 0.0 };
    2.0 * (ind - alpha) * (q - y)
}

/// CRPS as the integral of the quantile score over `alpha`, approximated on
/// the interior grid `alpha_k = k / (n_alpha + 1)`.
pub fn crps<F: Fn(f64) -> f64>(quantile: F, y: f64, n_alpha: usize) -> Result<f64> {
    if n_alpha < 10 {
        return Err(BctmError::InvalidParameter(format!("n_alpha must be at least 10, got {n_alpha}")));
    }
    let h = 1.0 / (n_alpha + 1) as f64;
    Ok((1..=n_alpha)
        .map(|k| {
            let a = k as f64 * h;
            quantile_score(quantile(a), y, a)
        })
        .sum::<f64>()
        * h)
}

/// Mean of `estimate - truth` over paired quantiles.
pub fn quantile_bias(estimated: &[f64], truth: &[f64]) -> Result<f64> {
    same_length(estimated.len(), truth.len())?;
    Ok(estimated.iter().zip(truth).map(|(e, t)| e - t).sum::<f64>() / truth.len() as f64)
}

/// Fraction of points with `lower <= truth <= upper`.
pub fn coverage(truth: &[f64], lower: &[f64], upper: &[f64]) -> Result<f64> {
    same_length(truth.len(), lower.len())?;
    same_length(truth.len(), upper.len())?;
    let hits = truth
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(t, (l, u))| *l <= *t && *t <= *u)
        .count();
    Ok(hits as f64 / truth.len() as f64)
}
