//! Posterior summaries of the conditional distribution and model scores.

use serde::{Deserialize, Serialize};

use crate::data::Covariates;
use crate::error::{BctmError, Result};
use crate::likelihood::row_log_likelihood;
use crate::linalg::{log_sum_exp, quantile_sorted};
use crate::model::{CovariateRows, ModelDesign};
use crate::sampler::PosteriorDraws;

/// Default probability content of pointwise credible intervals.
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Bisection tolerance on the response scale.
pub const QUANTILE_TOL: f64 = 1e-8;

/// Posterior summary of `F(y | x)` along a response grid for one covariate row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistributionEstimate {
    /// Row of the covariate table the estimate belongs to.
    pub row: usize,
    pub y: Vec<f64>,
    pub cdf_mean: Vec<f64>,
    pub cdf_lower: Vec<f64>,
    pub cdf_upper: Vec<f64>,
    pub density_mean: Vec<f64>,
    pub level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub alpha: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Per-draw quantiles.
    pub draws: Vec<f64>,
    /// Draws for which `alpha` was outside the cdf range on the domain.
    pub at_boundary: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub waic: f64,
    pub p_waic: f64,
    pub dic: f64,
    pub p_dic: f64,
    pub lppd: f64,
}

fn check_draws(draws: &PosteriorDraws) -> Result<()> {
    if draws.is_empty() {
        Err(BctmError::EmptyDraws)
    } else {
        Ok(())
    }
}

fn check_row(rows: &CovariateRows, row: usize) -> Result<()> {
    if row >= rows.nrows() {
        return Err(BctmError::InvalidData(format!(
            "row {row} out of range for {} covariate rows",
            rows.nrows()
        )));
    }
    Ok(())
}

/// Per-draw `(cdf, density)` on `y_grid` for covariate row `row`; the
/// outer index is the draw.
pub fn draw_curves(
    draws: &PosteriorDraws,
    design: &ModelDesign,
    rows: &CovariateRows,
    row: usize,
    y_grid: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_draws(draws)?;
    check_row(rows, row)?;
    let idx = vec![row; y_grid.len()];
    let sites = design.site_matrix(rows, &idx, y_grid);
    let dist = design.reference;
    let mut cdfs = Vec::with_capacity(draws.len());
    let mut dens = Vec::with_capacity(draws.len());
    for beta in &draws.beta {
        let (h, hp) = design.transform(beta, &sites);
        cdfs.push(h.iter().map(|&v| dist.cdf(v)).collect());
        dens.push(
            h.iter()
                .zip(hp.iter())
                .map(|(&v, &d)| if d > 0.0 { dist.log_pdf(v).exp() * d } else { 0.0 })
                .collect(),
        );
    }
    Ok((cdfs, dens))
}

/// Posterior mean cdf with pointwise credible bounds.
pub fn posterior_cdf(
    draws: &PosteriorDraws,
    design: &ModelDesign,
    x: &Covariates,
    row: usize,
    y_grid: &[f64],
) -> Result<ConditionalDistributionEstimate> {
    posterior_cdf_level(draws, design, x, row, y_grid, DEFAULT_LEVEL)
}

pub fn posterior_cdf_level(
    draws: &PosteriorDraws,
    design: &ModelDesign,
    x: &Covariates,
    row: usize,
    y_grid: &[f64],
    level: f64,
) -> Result<ConditionalDistributionEstimate> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BctmError::InvalidParameter(format!("credible level {level} outside (0, 1)")));
    }
    let rows = design.covariate_rows(x)?;
    let (cdfs, dens) = draw_curves(draws, design, &rows, row, y_grid)?;
    let s = cdfs.len() as f64;
    let g = y_grid.len();
    let mut est = ConditionalDistributionEstimate {
        row,
        y: y_grid.to_vec(),
        cdf_mean: vec![0.0; g],
        cdf_lower: vec![0.0; g],
        cdf_upper: vec![0.0; g],
        density_mean: vec![0.0; g],
        level,
    };
    let tail = 0.5 * (1.0 - level);
    let mut col = Vec::with_capacity(cdfs.len());
    for k in 0..g {
        col.clear();
        col.extend(cdfs.iter().map(|c| c[k]));
        est.cdf_mean[k] = col.iter().sum::<f64>() / s;
        est.density_mean[k] = dens.iter().map(|d| d[k]).sum::<f64>() / s;
        col.sort_by(f64::total_cmp);
        est.cdf_lower[k] = quantile_sorted(&col, tail).min(est.cdf_mean[k]);
        est.cdf_upper[k] = quantile_sorted(&col, 1.0 - tail).max(est.cdf_mean[k]);
    }
    Ok(est)
}

/// Per-draw `alpha`-quantiles by bisection on the response domain,
/// summarized by their mean and a pointwise credible interval.
pub fn posterior_quantile(
    draws: &PosteriorDraws,
    design: &ModelDesign,
    x: &Covariates,
    row: usize,
    alpha: f64,
) -> Result<QuantileEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BctmError::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    check_draws(draws)?;
    let rows = design.covariate_rows(x)?;
    check_row(&rows, row)?;
    let (lo, hi) = design.response_domain();
    let dist = design.reference;
    let mut u = vec![0.0; design.dim()];
    let mut up = vec![0.0; design.dim()];
    let mut at_boundary = 0;
    let mut qs = Vec::with_capacity(draws.len());
    for beta in &draws.beta {
        let (bt, _, _) = design.beta_tilde(beta);
        let mut cdf = |y: f64| {
            design.fill_site(&rows, row, y, &mut u, &mut up);
            let h: f64 = u.iter().zip(bt.iter()).map(|(a, b)| a * b).sum();
            dist.cdf(h)
        };
        let (flo, fhi) = (cdf(lo), cdf(hi));
        let q = if alpha <= flo {
            at_boundary += 1;
            lo
        } else if alpha >= fhi {
            at_boundary += 1;
            hi
        } else {
            let (mut a, mut b) = (lo, hi);
            while b - a > QUANTILE_TOL {
                let m = 0.5 * (a + b);
                if cdf(m) < alpha {
                    a = m;
                } else {
                    b = m;
                }
            }
            0.5 * (a + b)
        };
        qs.push(q);
    }
    if at_boundary > 0 {
        log::warn!("alpha = {alpha} outside the cdf range on the domain for {at_boundary} draws; boundary values used");
    }
    let mean = qs.iter().sum::<f64>() / qs.len() as f64;
    let mut sorted = qs.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - DEFAULT_LEVEL);
    Ok(QuantileEstimate {
        alpha,
        mean,
        lower: quantile_sorted(&sorted, tail),
        upper: quantile_sorted(&sorted, 1.0 - tail),
        draws: qs,
        at_boundary,
    })
}

/// The posterior mean cdf `F(. | x)` tabulated on a dense response grid, for
/// repeated inversion.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveCdf {
    pub y: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl PredictiveCdf {
    pub fn new(draws: &PosteriorDraws, design: &ModelDesign, rows: &CovariateRows, row: usize, points: usize) -> Result<Self> {
        let (lo, hi) = design.response_domain();
        let points = points.max(2);
        let y: Vec<f64> = (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect();
        let (cdfs, _) = draw_curves(draws, design, rows, row, &y)?;
        let s = cdfs.len() as f64;
        let mut cdf: Vec<f64> = (0..points).map(|k| cdfs.iter().map(|c| c[k]).sum::<f64>() / s).collect();
        // guard against rounding in the average
        for k in 1..points {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        Ok(Self { y, cdf })
    }

    /// Linear interpolation of the tabulated cdf; constant outside the grid.
    pub fn cdf_at(&self, y: f64) -> f64 {
        let k = self.y.partition_point(|&v| v < y);
        if k == 0 {
            return self.cdf[0];
        }
        if k == self.y.len() {
            return self.cdf[k - 1];
        }
        let t = (y - self.y[k - 1]) / (self.y[k] - self.y[k - 1]);
        self.cdf[k - 1] + t * (self.cdf[k] - self.cdf[k - 1])
    }

    /// Generalized inverse by linear interpolation; boundary values outside the
    /// tabulated range.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < alpha);
        if k == 0 {
            return self.y[0];
        }
        if k == self.cdf.len() {
            return self.y[k - 1];
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        if c1 <= c0 {
            return self.y[k];
        }
        self.y[k - 1] + (alpha - c0) / (c1 - c0) * (self.y[k] - self.y[k - 1])
    }
}

/// WAIC (with lppd and `p_waic`) and DIC of the data the design was built on.
pub fn waic(draws: &PosteriorDraws, design: &ModelDesign) -> Result<ModelScore> {
    check_draws(draws)?;
    let n = design.observations.len();
    let ll: Vec<Vec<f64>> = draws.beta.iter().map(|b| row_log_likelihood(design, b)).collect();
    let s = ll.len();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut col = vec![0.0; s];
    for i in 0..n {
        for (c, l) in col.iter_mut().zip(&ll) {
            *c = l[i];
        }
        lppd += log_sum_exp(&col) - (s as f64).ln();
        if s > 1 {
            p_waic += crate::linalg::variance(&col);
        }
    }
    let mean_dev = -2.0 * ll.iter().map(|l| l.iter().sum::<f64>()).sum::<f64>() / s as f64;
    let beta_bar = draws.mean_beta()?;
    let dev_bar = -2.0 * row_log_likelihood(design, &beta_bar).iter().sum::<f64>();
    let p_dic = mean_dev - dev_bar;
    Ok(ModelScore {
        waic: -2.0 * lppd + 2.0 * p_waic,
        p_waic,
        dic: dev_bar + 2.0 * p_dic,
        p_dic,
        lppd,
    })
}

/// Log predictive density of held-out data, `sum_i log mean_s f(y_i | beta_s)`.
pub fn log_score(draws: &PosteriorDraws, design: &ModelDesign, data: &crate::data::DataSet) -> Result<f64> {
    check_draws(draws)?;
    let test = design.for_data(data)?;
    let ll: Vec<Vec<f64>> = draws.beta.iter().map(|b| row_log_likelihood(&test, b)).collect();
    let s = ll.len() as f64;
    let mut total = 0.0;
    let mut col = vec![0.0; ll.len()];
    for i in 0..test.observations.len() {
        for (c, l) in col.iter_mut().zip(&ll) {
            *c = l[i];
        }
        total += log_sum_exp(&col) - s.ln();
    }
    Ok(total)
}
