//! Realized design of one partial transformation function `h_j(y|x)`.
//!
//! Coefficients are stored in "free" coordinates: the shift block (the part
//! that does not vary with `y`) may be reduced by a sum-to-zero map when the
//! term is centred, the remaining blocks are kept as is. Evaluation at a site
//! `(y, x)` uses rows `u = T^T Sigma^T c(y, x)` so that `h_j = u . beta_tilde`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::basis::{difference_matrix, knots_for_data, partial_first_difference_penalty, KnotVector};
use crate::data::{Covariates, DataSet};
use crate::error::{BctmError, Result};
use crate::linalg::{sum_to_zero_basis, sym_eigenvalues};
use crate::model::elicit::elicit_sd_scale;
use crate::model::spec::{CovariateSpec, HyperpriorSpec, ResponseSpec, TermSpec};

/// Ridge added to every prior precision.
pub const PRECISION_RIDGE: f64 = 1e-6;
/// Coefficients are clipped here before exponentiation.
pub const EXP_CLIP: f64 = 30.0;
/// Eigenvalues above this count towards the penalty rank.
pub const RANK_TOL: f64 = 1e-8;
pub const ELICITATION_DRAWS: usize = 10_000;

/// The default grid `0.05, 0.10, ..., 0.95`.
pub fn default_omega_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum ResponseBasis {
    Intercept,
    Linear,
    Spline(KnotVector),
}

impl ResponseBasis {
    pub fn dim(&self) -> usize {
        match self {
            ResponseBasis::Intercept => 1,
            ResponseBasis::Linear => 2,
            ResponseBasis::Spline(kv) => kv.num_basis(),
        }
    }

    /// Raw basis `a(y)` and derivative `a'(y)`.
    pub fn eval(&self, y: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            ResponseBasis::Intercept => (vec![1.0], vec![0.0]),
            ResponseBasis::Linear => (vec![1.0, y], vec![0.0, 1.0]),
            ResponseBasis::Spline(kv) => {
                let (yc, clamped) = kv.clamp(y);
                let a = kv.row(yc, 0);
                let ap = if clamped { vec![0.0; a.len()] } else { kv.row(yc, 1) };
                (a, ap)
            }
        }
    }

    /// Multipliers of the coefficient blocks after the cumulative-sum
    /// reparameterization: tail sums of the spline basis, raw values otherwise.
    pub fn block_values(&self, y: f64) -> (Vec<f64>, Vec<f64>) {
        match self {
            ResponseBasis::Spline(_) => {
                let (mut a, mut ap) = self.eval(y);
                // where every lower basis function vanishes the tail sum is
                // exactly one; summing the partition of unity would leave ulp
                // noise that breaks monotonicity of h in floating point
                let full = a.iter().position(|&v| v != 0.0).unwrap_or(0);
                for k in (0..a.len() - 1).rev() {
                    a[k] += a[k + 1];
                    ap[k] += ap[k + 1];
                }
                for v in &mut a[..=full] {
                    *v = 1.0;
                }
                ap[0] = 0.0;
                for v in a.iter_mut() {
                    *v = v.min(1.0);
                }
                (a, ap)
            }
            _ => self.eval(y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CovariateBasis {
    None,
    /// Affinely rescaled raw columns `(x - shift) / scale`, optionally clamped
    /// to `[0, 1]`.
    Linear {
        columns: Vec<String>,
        shift: Vec<f64>,
        scale: Vec<f64>,
        unit_interval: bool,
    },
    Spline {
        column: String,
        knots: KnotVector,
    },
    /// One indicator per level (random effects and regions).
    Indicator {
        column: String,
        levels: Vec<String>,
    },
}

impl CovariateBasis {
    pub fn dim(&self) -> usize {
        match self {
            CovariateBasis::None => 1,
            CovariateBasis::Linear { columns, .. } => columns.len(),
            CovariateBasis::Spline { knots, .. } => knots.num_basis(),
            CovariateBasis::Indicator { levels, .. } => levels.len(),
        }
    }

    /// Whether the basis reproduces the constant function.
    pub fn spans_constant(&self) -> bool {
        !matches!(self, CovariateBasis::Linear { .. })
    }

    /// Raw basis rows `b(x_i)` for every row of `cov`.
    pub fn rows(&self, cov: &Covariates) -> Result<DMatrix<f64>> {
        let n = cov.nrows();
        match self {
            CovariateBasis::None => Ok(DMatrix::from_element(n, 1, 1.0)),
            CovariateBasis::Linear {
                columns,
                shift,
                scale,
                unit_interval,
            } => {
                let mut m = DMatrix::zeros(n, columns.len());
                let mut clamped = 0usize;
                for (j, name) in columns.iter().enumerate() {
                    let x = cov.real(name)?;
                    for i in 0..n {
                        let mut v = (x[i] - shift[j]) / scale[j];
                        if *unit_interval && !(0.0..=1.0).contains(&v) {
                            v = v.clamp(0.0, 1.0);
                            clamped += 1;
                        }
                        m[(i, j)] = v;
                    }
                }
                if clamped > 0 {
                    log::warn!("{clamped} linear covariate values clamped to the training range");
                }
                Ok(m)
            }
            CovariateBasis::Spline { column, knots } => {
                let x = cov.real(column)?;
                Ok(crate::basis::eval_basis(knots, x, 0).values)
            }
            CovariateBasis::Indicator { column, levels } => {
                let labels = cov.labels(column)?;
                let index: BTreeMap<&str, usize> =
                    levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let mut m = DMatrix::zeros(n, levels.len());
                let mut unknown = 0usize;
                for (i, l) in labels.iter().enumerate() {
                    match index.get(l.as_str()) {
                        Some(&k) => m[(i, k)] = 1.0,
                        None => unknown += 1,
                    }
                }
                if unknown > 0 {
                    log::warn!("{unknown} rows of `{column}` have levels unseen in training; effect set to zero");
                }
                Ok(m)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Hyperprior {
    InverseGamma { a: f64, b: f64 },
    /// Weibull(0.5, theta) prior on `tau^2`.
    ScaleDependent { theta: f64 },
    /// Unpenalized term: `tau^2` stays at 1 and is never updated.
    Fixed,
}

impl Hyperprior {
    pub fn log_density(&self, tau2: f64) -> f64 {
        match *self {
            Hyperprior::InverseGamma { a, b } => {
                a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * tau2.ln() - b / tau2
            }
            Hyperprior::ScaleDependent { theta } => {
                // Weibull(k = 1/2, scale theta)
                let k = 0.5;
                (k / theta).ln() + (k - 1.0) * (tau2 / theta).ln() - (tau2 / theta).powf(k)
            }
            Hyperprior::Fixed => 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TermDesign {
    pub name: String,
    pub response: ResponseBasis,
    pub covariate: CovariateBasis,
    pub monotone: bool,
    pub centered: bool,
    col_means: DVector<f64>,
    /// `D2 x s` map from free shift coordinates to the full shift block.
    shift_map: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    /// Full-coordinate reparameterization `Sigma_{D1} (x) I_{D2}`.
    pub sigma: DMatrix<f64>,
    /// Full-coordinate mask of exponentiated coefficients.
    pub exp_mask: Vec<bool>,
    free_exp_mask: Vec<bool>,
    pen_response: DMatrix<f64>,
    pen_covariate: DMatrix<f64>,
    pub omega_grid: Vec<f64>,
    eigen_table: Vec<Vec<f64>>,
    /// `log det` of the ridge-augmented precision at `tau^2 = 1`, per grid value.
    pub logdet_table: Vec<f64>,
    pub rank_k: usize,
    pub penalized: bool,
    pub hyperprior: Hyperprior,
}

fn spatial_levels_and_laplacian(
    labels: &[String],
    edges: &[(String, String)],
) -> (Vec<String>, DMatrix<f64>, usize) {
    let mut set: BTreeSet<String> = labels.iter().cloned().collect();
    for (a, b) in edges {
        set.insert(a.clone());
        set.insert(b.clone());
    }
    let levels: Vec<String> = set.into_iter().collect();
    let index: BTreeMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let g = levels.len();
    let mut adj = vec![BTreeSet::new(); g];
    for (a, b) in edges {
        let (i, j) = (index[a.as_str()], index[b.as_str()]);
        if i != j {
            adj[i].insert(j);
            adj[j].insert(i);
        }
    }
    let mut lap = DMatrix::zeros(g, g);
    for i in 0..g {
        lap[(i, i)] = adj[i].len() as f64;
        for &j in &adj[i] {
            lap[(i, j)] = -1.0;
        }
    }
    // connected components by depth-first search
    let mut seen = vec![false; g];
    let mut components = 0;
    for s in 0..g {
        if seen[s] {
            continue;
        }
        components += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    (levels, lap, components)
}

fn finite_range(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Build a term against training data; scale elicitation (if any) uses seed 0.
pub fn build_term(spec: &TermSpec, data: &DataSet) -> Result<TermDesign> {
    build_term_seeded(spec, data, 0)
}

pub fn build_term_seeded(spec: &TermSpec, data: &DataSet, seed: u64) -> Result<TermDesign> {
    let monotone = spec.is_monotone();
    let response = match spec.response {
        ResponseSpec::Intercept => ResponseBasis::Intercept,
        ResponseSpec::Linear => ResponseBasis::Linear,
        ResponseSpec::Spline { num_basis, degree } => {
            let values = data.response_values();
            if values.is_empty() {
                return Err(BctmError::InvalidData("no response values to place knots".into()));
            }
            ResponseBasis::Spline(knots_for_data(&values, num_basis, degree)?)
        }
    };
    let cov = &data.covariates;
    let (covariate, k2) = match &spec.covariate {
        CovariateSpec::None => (CovariateBasis::None, DMatrix::zeros(1, 1)),
        CovariateSpec::Linear(cols) => {
            let mut shift = Vec::with_capacity(cols.len());
            let mut scale = Vec::with_capacity(cols.len());
            for c in cols {
                let x = cov.real(c)?;
                if monotone {
                    // nonnegative rescaling keeps the tensor monotone
                    let (lo, hi) = finite_range(x);
                    shift.push(lo);
                    scale.push(if hi > lo { hi - lo } else { 1.0 });
                } else {
                    let m = crate::linalg::mean(x);
                    let sd = crate::linalg::variance(x).sqrt();
                    shift.push(m);
                    scale.push(if sd > 0.0 { sd } else { 1.0 });
                }
            }
            let p = cols.len();
            (
                CovariateBasis::Linear {
                    columns: cols.clone(),
                    shift,
                    scale,
                    unit_interval: monotone,
                },
                DMatrix::zeros(p, p),
            )
        }
        CovariateSpec::Spline {
            column,
            num_basis,
            degree,
        } => {
            let x = cov.real(column)?;
            let knots = knots_for_data(x, *num_basis, *degree)?;
            let d = difference_matrix(*num_basis, 2);
            (
                CovariateBasis::Spline {
                    column: column.clone(),
                    knots,
                },
                d.transpose() * d,
            )
        }
        CovariateSpec::RandomEffect { column } => {
            let labels: BTreeSet<String> = cov.labels(column)?.into_iter().collect();
            let g = labels.len();
            (
                CovariateBasis::Indicator {
                    column: column.clone(),
                    levels: labels.into_iter().collect(),
                },
                DMatrix::identity(g, g),
            )
        }
        CovariateSpec::Spatial { column, edges } => {
            let labels = cov.labels(column)?;
            let (levels, lap, components) = spatial_levels_and_laplacian(&labels, edges);
            if components > 1 {
                log::warn!(
                    "adjacency graph of `{column}` has {components} connected components; the penalty loses rank accordingly"
                );
            }
            (
                CovariateBasis::Indicator {
                    column: column.clone(),
                    levels,
                },
                lap,
            )
        }
    };

    let d1 = response.dim();
    let d2 = covariate.dim();
    let centered = spec.centered();
    let b_train = covariate.rows(cov)?;
    let (col_means, shift_map) = if centered {
        let n = b_train.nrows().max(1) as f64;
        let means = DVector::from_iterator(d2, b_train.column_iter().map(|c| c.sum() / n));
        let map = if covariate.spans_constant() {
            sum_to_zero_basis(d2)
        } else {
            DMatrix::identity(d2, d2)
        };
        (means, map)
    } else {
        (DVector::zeros(d2), DMatrix::identity(d2, d2))
    };

    let k1 = if monotone {
        partial_first_difference_penalty(d1)
    } else {
        DMatrix::zeros(d1, d1)
    };
    let full = d1 * d2;
    let sigma = if monotone {
        let lower = DMatrix::from_fn(d1, d1, |k, l| if k >= l { 1.0 } else { 0.0 });
        lower.kronecker(&DMatrix::<f64>::identity(d2, d2))
    } else {
        DMatrix::identity(full, full)
    };
    let exp_mask: Vec<bool> = (0..full).map(|i| monotone && i >= d2).collect();
    let s = shift_map.ncols();
    let dim = s + (d1 - 1) * d2;
    let free_exp_mask: Vec<bool> = (0..dim).map(|i| monotone && i >= s).collect();

    // T = blockdiag(shift_map, I)
    let mut t = DMatrix::zeros(full, dim);
    t.view_mut((0, 0), (d2, s)).copy_from(&shift_map);
    for i in 0..(d1 - 1) * d2 {
        t[(d2 + i, s + i)] = 1.0;
    }
    let p1 = k1.kronecker(&DMatrix::<f64>::identity(d2, d2));
    let p2 = DMatrix::<f64>::identity(d1, d1).kronecker(&k2);
    let pen_response = t.transpose() * p1 * &t;
    let pen_covariate = t.transpose() * p2 * &t;
    let has1 = pen_response.amax() > 0.0;
    let has2 = pen_covariate.amax() > 0.0;
    let omega_grid = match (has1, has2) {
        (true, true) => default_omega_grid(),
        (true, false) => vec![1.0],
        _ => vec![0.0],
    };
    let eigen_table: Vec<Vec<f64>> = omega_grid
        .iter()
        .map(|&w| {
            sym_eigenvalues(&(&pen_response * w + &pen_covariate * (1.0 - w)))
                .into_iter()
                .map(|l| l.max(0.0))
                .collect()
        })
        .collect();
    let logdet_table = eigen_table
        .iter()
        .map(|ev| ev.iter().map(|l| (l + PRECISION_RIDGE).ln()).sum())
        .collect();
    let rank_omega = if omega_grid.len() > 1 { 0.5 } else { omega_grid[0] };
    let rank_k = sym_eigenvalues(&(&pen_response * rank_omega + &pen_covariate * (1.0 - rank_omega)))
        .into_iter()
        .filter(|&l| l > RANK_TOL)
        .count();
    let penalized = has1 || has2;

    let mut td = TermDesign {
        name: spec.name.clone(),
        response,
        covariate,
        monotone,
        centered,
        col_means,
        shift_map,
        k1,
        k2,
        sigma,
        exp_mask,
        free_exp_mask,
        pen_response,
        pen_covariate,
        omega_grid,
        eigen_table,
        logdet_table,
        rank_k,
        penalized,
        hyperprior: Hyperprior::Fixed,
    };
    if penalized {
        td.hyperprior = match spec.hyperprior {
            HyperpriorSpec::Ig { a, b } => Hyperprior::InverseGamma { a, b },
            HyperpriorSpec::Sd { theta: Some(theta), .. } => Hyperprior::ScaleDependent { theta },
            HyperpriorSpec::Sd { c, alpha, theta: None } => Hyperprior::ScaleDependent {
                theta: elicit_sd_scale(c, alpha, &td, ELICITATION_DRAWS, seed)?,
            },
        };
    }
    Ok(td)
}

impl TermDesign {
    pub fn d1(&self) -> usize {
        self.response.dim()
    }

    pub fn d2(&self) -> usize {
        self.covariate.dim()
    }

    /// Length of the full coefficient vector `gamma_j`.
    pub fn full_dim(&self) -> usize {
        self.d1() * self.d2()
    }

    pub fn shift_dim(&self) -> usize {
        self.shift_map.ncols()
    }

    /// Number of sampled coefficients.
    pub fn dim(&self) -> usize {
        self.shift_dim() + (self.d1() - 1) * self.d2()
    }

    pub fn free_exp_mask(&self) -> &[bool] {
        &self.free_exp_mask
    }

    pub fn depends_on_response(&self) -> bool {
        self.response != ResponseBasis::Intercept
    }

    /// Raw covariate basis rows for `cov`.
    pub fn covariate_rows(&self, cov: &Covariates) -> Result<DMatrix<f64>> {
        self.covariate.rows(cov)
    }

    /// Free-coordinate evaluation rows at response `y` for covariate basis row
    /// `b`: `h_j = u . beta_tilde`, `h_j' = up . beta_tilde`.
    pub fn fill_site(&self, y: f64, b: &[f64], u: &mut [f64], up: &mut [f64]) {
        let (a, ap) = self.response.block_values(y);
        let d2 = self.d2();
        let s = self.shift_dim();
        for c in 0..s {
            let mut v = 0.0;
            for r in 0..d2 {
                v += (b[r] - self.col_means[r]) * self.shift_map[(r, c)];
            }
            u[c] = a[0] * v;
            up[c] = ap[0] * v;
        }
        for k in 1..a.len() {
            let off = s + (k - 1) * d2;
            for r in 0..d2 {
                u[off + r] = a[k] * b[r];
                up[off + r] = ap[k] * b[r];
            }
        }
    }

    /// Joint basis `c(y, x) = a(y) (x) b(x)` and `c'(y, x)` in full coordinates.
    pub fn joint_basis(&self, y: f64, b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (a, ap) = self.response.eval(y);
        (crate::basis::kron_row(&a, b), crate::basis::kron_row(&ap, b))
    }

    /// Expand free coordinates to the full coefficient vector `beta_j`.
    pub fn full_from_free(&self, free: &[f64]) -> Vec<f64> {
        let d2 = self.d2();
        let s = self.shift_dim();
        let mut out = vec![0.0; self.full_dim()];
        for r in 0..d2 {
            out[r] = (0..s).map(|c| self.shift_map[(r, c)] * free[c]).sum();
        }
        out[d2..].copy_from_slice(&free[s..]);
        out
    }

    /// Constant removed from `c . gamma` by centring: `h_j = c . gamma - offset`.
    pub fn centering_offset(&self, free: &[f64]) -> f64 {
        let full = self.full_from_free(free);
        (0..self.d2()).map(|r| self.col_means[r] * full[r]).sum()
    }

    /// Unscaled free-coordinate penalty `omega P_1 + (1 - omega) P_2`.
    pub fn penalty(&self, omega: f64) -> DMatrix<f64> {
        &self.pen_response * omega + &self.pen_covariate * (1.0 - omega)
    }

    /// Free-coordinate prior precision with ridge.
    pub fn precision(&self, tau2: f64, omega: f64) -> DMatrix<f64> {
        let dim = self.dim();
        self.penalty(omega) / tau2 + DMatrix::identity(dim, dim) * PRECISION_RIDGE
    }

    /// `(beta' P_1 beta, beta' P_2 beta)` and the vectors `P_1 beta`, `P_2 beta`.
    pub fn penalty_parts(&self, beta: &[f64]) -> (f64, f64, DVector<f64>, DVector<f64>) {
        let b = DVector::from_column_slice(beta);
        let p1b = &self.pen_response * &b;
        let p2b = &self.pen_covariate * &b;
        (b.dot(&p1b), b.dot(&p2b), p1b, p2b)
    }

    pub fn omega_index(&self, omega: f64) -> Option<usize> {
        self.omega_grid.iter().position(|&w| (w - omega).abs() < 1e-9)
    }

    /// Log-determinant of the ridge-augmented precision at `(tau2, omega_grid[idx])`.
    pub fn logdet(&self, tau2: f64, idx: usize) -> f64 {
        self.eigen_table[idx]
            .iter()
            .map(|&l| (l / tau2 + PRECISION_RIDGE).ln())
            .sum()
    }

    pub fn eigenvalues(&self, idx: usize) -> &[f64] {
        &self.eigen_table[idx]
    }

    /// Whether `omega` is sampled.
    pub fn samples_omega(&self) -> bool {
        self.omega_grid.len() > 1
    }

    pub fn samples_tau2(&self) -> bool {
        self.penalized
    }

    /// Full coefficients of the spline response domain, if any.
    pub fn response_domain(&self) -> Option<(f64, f64)> {
        match &self.response {
            ResponseBasis::Spline(kv) => Some(kv.domain()),
            _ => None,
        }
    }

    /// The operation `beta_j -> (gamma_j, C_diag)` on full coordinates.
    pub fn reparameterize(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        reparameterize(beta, self)
    }
}

/// Exponentiate masked entries (clipped at [`EXP_CLIP`]) and apply `Sigma`.
/// Returns `gamma` and the diagonal Jacobian of `beta -> beta_tilde`.
pub fn reparameterize(beta: &[f64], td: &TermDesign) -> (Vec<f64>, Vec<f64>) {
    let mut tilde = beta.to_vec();
    let mut cdiag = vec![1.0; beta.len()];
    let mut clipped = 0usize;
    for (i, &m) in td.exp_mask.iter().enumerate() {
        if m {
            if beta[i] > EXP_CLIP {
                clipped += 1;
            }
            let e = beta[i].min(EXP_CLIP).exp();
            tilde[i] = e;
            cdiag[i] = e;
        }
    }
    if clipped > 0 {
        log::debug!("{clipped} coefficients clipped before exponentiation");
    }
    let gamma = if td.monotone {
        let d2 = td.d2();
        let mut g = tilde.clone();
        for i in d2..g.len() {
            g[i] += g[i - d2];
        }
        g
    } else {
        tilde
    };
    (gamma, cdiag)
}

/// Full-coordinate prior precision
/// `(1/tau2) [omega (K1 (x) I) + (1 - omega) (I (x) K2)] + ridge I`.
pub fn build_precision(td: &TermDesign, tau2: f64, omega: f64) -> Result<DMatrix<f64>> {
    if !(tau2 > 0.0) {
        return Err(BctmError::InvalidParameter(format!("tau2 must be positive, got {tau2}")));
    }
    if !(0.0..=1.0).contains(&omega) {
        return Err(BctmError::InvalidParameter(format!("omega must lie in [0, 1], got {omega}")));
    }
    let (d1, d2) = (td.d1(), td.d2());
    let p1 = td.k1.kronecker(&DMatrix::<f64>::identity(d2, d2));
    let p2 = DMatrix::<f64>::identity(d1, d1).kronecker(&td.k2);
    let n = d1 * d2;
    Ok((p1 * omega + p2 * (1.0 - omega)) / tau2 + DMatrix::identity(n, n) * PRECISION_RIDGE)
}
