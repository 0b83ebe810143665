//! Assembled model: every term realized on the training sites.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::data::{Covariates, DataSet, DiscreteSupport, Response};
use crate::error::{BctmError, Result};
use crate::model::spec::ModelSpec;
use crate::model::term::{build_term_seeded, CovariateBasis, ResponseBasis, TermDesign, EXP_CLIP};
use crate::reference::ReferenceDistribution;

/// How a data row enters the likelihood. Sites index rows of the evaluation
/// matrices of [`ModelDesign`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Observation {
    Exact { site: usize },
    /// `P(h(lower) < Z <= h(upper))`; a missing bound is infinite.
    Bounded { lower: Option<usize>, upper: Option<usize> },
}

/// Free-coordinate evaluation rows at a set of `(row, y)` sites. Column 0
/// belongs to the global intercept.
#[derive(Clone, Debug)]
pub struct SiteMatrix {
    pub u: DMatrix<f64>,
    pub up: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct ModelDesign {
    pub reference: ReferenceDistribution,
    pub terms: Vec<TermDesign>,
    offsets: Vec<usize>,
    dim: usize,
    exp_mask: Vec<bool>,
    pub observations: Vec<Observation>,
    pub sites: SiteMatrix,
    pub site_y: Vec<f64>,
    pub site_row: Vec<usize>,
    response_domain: (f64, f64),
    response_scale: f64,
}

/// Covariate basis rows of every term for one covariate table.
#[derive(Clone, Debug)]
pub struct CovariateRows {
    rows: Vec<DMatrix<f64>>,
}

impl CovariateRows {
    pub fn nrows(&self) -> usize {
        self.rows.first().map_or(0, |m| m.nrows())
    }
}

/// Columns of the evaluation matrices spent on the global intercept.
const INTERCEPT_COLUMN: usize = 1;

impl ModelDesign {
    pub fn build(spec: &ModelSpec, data: &DataSet) -> Result<Self> {
        let mut spec = spec.clone();
        spec.fill_names();
        spec.validate()?;
        data.validate()?;
        if data.is_empty() {
            return Err(BctmError::InvalidData("empty data set".into()));
        }
        let mut terms = Vec::new();
        for (k, ts) in spec.terms.iter().enumerate() {
            if ts.is_global_intercept() {
                continue;
            }
            let seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
            terms.push(build_term_seeded(ts, data, seed)?);
        }
        let mut offsets = Vec::with_capacity(terms.len());
        let mut dim = INTERCEPT_COLUMN;
        let mut exp_mask = vec![false];
        for t in &terms {
            offsets.push(dim);
            dim += t.dim();
            exp_mask.extend_from_slice(t.free_exp_mask());
        }

        let values = data.response_values();
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let spline_domain = terms.iter().find_map(|t| t.response_domain());
        let response_domain = match spline_domain {
            Some(d) => d,
            None => {
                let w = if hi > lo { hi - lo } else { 1.0 };
                (lo - 0.5 * w, hi + 0.5 * w)
            }
        };
        let sd = crate::linalg::variance(&values).sqrt();
        let response_scale = if sd > 0.0 { sd } else { 1.0 };

        let mut design = ModelDesign {
            reference: spec.reference,
            terms,
            offsets,
            dim,
            exp_mask,
            observations: Vec::with_capacity(data.len()),
            sites: SiteMatrix {
                u: DMatrix::zeros(0, dim),
                up: DMatrix::zeros(0, dim),
            },
            site_y: Vec::new(),
            site_row: Vec::new(),
            response_domain,
            response_scale,
        };

        design.attach(data)?;
        Ok(design)
    }

    /// The same model (knots, centring, penalties) evaluated on other data,
    /// e.g. a held-out sample.
    pub fn for_data(&self, data: &DataSet) -> Result<ModelDesign> {
        data.validate()?;
        let mut out = self.clone();
        out.attach(data)?;
        Ok(out)
    }

    fn attach(&mut self, data: &DataSet) -> Result<()> {
        let mut site_y = Vec::new();
        let mut site_row = Vec::new();
        let mut push = |i: usize, y: f64| {
            site_y.push(y);
            site_row.push(i);
            site_y.len() - 1
        };
        let mut observations = Vec::with_capacity(data.len());
        for (i, r) in data.responses.iter().enumerate() {
            let obs = match *r {
                Response::Exact(y) => Observation::Exact { site: push(i, y) },
                Response::RightCensored(y) => Observation::Bounded {
                    lower: Some(push(i, y)),
                    upper: None,
                },
                Response::LeftCensored(y) => Observation::Bounded {
                    lower: None,
                    upper: Some(push(i, y)),
                },
                Response::IntervalCensored(a, b) => Observation::Bounded {
                    lower: Some(push(i, a)),
                    upper: Some(push(i, b)),
                },
                Response::Discrete(k) => {
                    let lv = data.discrete.as_ref().expect("validated discrete levels");
                    let kk = lv.levels.len();
                    let lower = if k > 0 { Some(push(i, lv.levels[k - 1])) } else { None };
                    let upper = match lv.support {
                        DiscreteSupport::Finite if k + 1 == kk => None,
                        _ => Some(push(i, lv.levels[k])),
                    };
                    Observation::Bounded { lower, upper }
                }
            };
            observations.push(obs);
        }
        let rows = self.covariate_rows(&data.covariates)?;
        self.sites = self.site_matrix(&rows, &site_row, &site_y);
        self.observations = observations;
        self.site_y = site_y;
        self.site_row = site_row;
        Ok(())
    }

    /// Length of the stacked coefficient vector, global intercept included.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn term_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j] + self.terms[j].dim()
    }

    pub fn exp_mask(&self) -> &[bool] {
        &self.exp_mask
    }

    pub fn response_domain(&self) -> (f64, f64) {
        self.response_domain
    }

    pub fn nsites(&self) -> usize {
        self.site_y.len()
    }

    /// Whether the transformation has a spline component in the response.
    pub fn has_response_spline(&self) -> bool {
        self.terms.iter().any(|t| matches!(t.response, ResponseBasis::Spline(_)))
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut out = vec!["beta_0".to_string()];
        for t in &self.terms {
            out.extend((0..t.dim()).map(|k| format!("beta_{}_{k}", t.name)));
        }
        out
    }

    /// `beta_tilde` (masked entries exponentiated, clipped at [`EXP_CLIP`]) and
    /// the diagonal Jacobian `d beta_tilde / d beta`. The count of clipped
    /// entries is returned as well.
    pub fn beta_tilde(&self, beta: &[f64]) -> (DVector<f64>, DVector<f64>, usize) {
        let mut bt = DVector::from_column_slice(beta);
        let mut cd = DVector::from_element(beta.len(), 1.0);
        let mut clipped = 0;
        for (i, &m) in self.exp_mask.iter().enumerate() {
            if m {
                if beta[i] > EXP_CLIP {
                    clipped += 1;
                    bt[i] = EXP_CLIP.exp();
                    cd[i] = 0.0;
                } else {
                    let e = beta[i].exp();
                    bt[i] = e;
                    cd[i] = e;
                }
            }
        }
        (bt, cd, clipped)
    }

    pub fn covariate_rows(&self, cov: &Covariates) -> Result<CovariateRows> {
        let rows = self
            .terms
            .iter()
            .map(|t| t.covariate_rows(cov))
            .collect::<Result<Vec<_>>>()?;
        Ok(CovariateRows { rows })
    }

    /// Evaluation row at response `y` for covariate row `i`.
    pub fn fill_site(&self, rows: &CovariateRows, i: usize, y: f64, u: &mut [f64], up: &mut [f64]) {
        u[0] = 1.0;
        up[0] = 0.0;
        let mut b = Vec::new();
        for (j, t) in self.terms.iter().enumerate() {
            let r = self.term_range(j);
            let m = &rows.rows[j];
            b.clear();
            b.extend((0..m.ncols()).map(|c| m[(i, c)]));
            t.fill_site(y, &b, &mut u[r.clone()], &mut up[r]);
        }
    }

    pub fn site_matrix(&self, rows: &CovariateRows, row: &[usize], y: &[f64]) -> SiteMatrix {
        let n = y.len();
        let mut u = DMatrix::zeros(n, self.dim);
        let mut up = DMatrix::zeros(n, self.dim);
        let mut ru = vec![0.0; self.dim];
        let mut rup = vec![0.0; self.dim];
        for s in 0..n {
            self.fill_site(rows, row[s], y[s], &mut ru, &mut rup);
            for c in 0..self.dim {
                u[(s, c)] = ru[c];
                up[(s, c)] = rup[c];
            }
        }
        SiteMatrix { u, up }
    }

    /// `h` and `h'` at `(row i, y)` pairs for a coefficient vector.
    pub fn transform(&self, beta: &[f64], sites: &SiteMatrix) -> (DVector<f64>, DVector<f64>) {
        let (bt, _, _) = self.beta_tilde(beta);
        (&sites.u * &bt, &sites.up * &bt)
    }

    /// Transformation along a response grid for covariate row `i`.
    pub fn transform_grid(
        &self,
        beta: &[f64],
        rows: &CovariateRows,
        i: usize,
        ys: &[f64],
    ) -> (DVector<f64>, DVector<f64>) {
        let idx = vec![i; ys.len()];
        let sites = self.site_matrix(rows, &idx, ys);
        self.transform(beta, &sites)
    }

    /// Starting coefficients: standardized identity transformation, shared
    /// among the terms that carry a slope in `y`, all other effects zero.
    pub fn initial_beta(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.dim];
        let is_slope_carrier = |t: &TermDesign| match t.response {
            ResponseBasis::Linear => matches!(t.covariate, CovariateBasis::None),
            ResponseBasis::Spline(_) => true,
            ResponseBasis::Intercept => false,
        };
        let carriers = self.terms.iter().filter(|t| is_slope_carrier(t)).count().max(1);
        let slope = 1.0 / (self.response_scale * carriers as f64);
        for (j, t) in self.terms.iter().enumerate() {
            if !is_slope_carrier(t) {
                continue;
            }
            let start = self.term_range(j).start + t.shift_dim();
            match &t.response {
                ResponseBasis::Spline(kv) => {
                    let p = kv.degree().max(1);
                    let k = kv.knots();
                    let greville: Vec<f64> = (0..kv.num_basis())
                        .map(|d| k[d + 1..d + 1 + p].iter().sum::<f64>() / p as f64)
                        .collect();
                    let d2 = t.d2();
                    for d in 1..kv.num_basis() {
                        let inc = ((greville[d] - greville[d - 1]) * slope).max(1e-8);
                        for c in 0..d2 {
                            beta[start + (d - 1) * d2 + c] = inc.ln();
                        }
                    }
                }
                _ => beta[start] = slope,
            }
        }
        // match the standardized location: mean transformation zero at sites
        let (h, _) = self.transform(&beta, &self.sites);
        if h.len() > 0 {
            beta[0] -= h.mean();
        }
        beta
    }
}
