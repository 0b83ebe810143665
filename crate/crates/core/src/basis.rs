//! B-spline bases on clamped, equidistant knot vectors.
//!
//! Evaluation uses the Cox-de Boor recursion restricted to the non-zero span,
//! first derivatives come from the degree-reduced basis. Points outside the
//! knot domain are clamped to the nearest boundary and counted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BctmError, Result};

/// Fraction of the observed range added on each side when knots are placed
/// from data.
pub const RANGE_EXPANSION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl KnotVector {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn clamp(&self, t: f64) -> (f64, bool) {
        if t < self.lo {
            (self.lo, true)
        } else if t > self.hi {
            (self.hi, true)
        } else {
            (t, false)
        }
    }

    /// Index `i` of the knot span with `knots[i] <= t < knots[i+1]`; the right
    /// boundary belongs to the last non-empty span.
    fn span(&self, t: f64) -> usize {
        let n = self.num_basis();
        if t >= self.knots[n] {
            return n - 1;
        }
        // first knot strictly greater than t, minus one
        let idx = self.knots.partition_point(|&k| k <= t);
        idx.saturating_sub(1).clamp(self.degree, n - 1)
    }

    /// Non-zero basis values of degree `p` at `t` on span `i`: entries for
    /// functions `i-p ..= i`.
    fn nonzero_values(&self, i: usize, t: f64, p: usize) -> Vec<f64> {
        let k = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - k[i + 1 - j];
            right[j] = k[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        n
    }

    /// Full basis row (length `num_basis`) at an already-clamped point.
    pub fn row(&self, t: f64, deriv_order: u8) -> Vec<f64> {
        let nb = self.num_basis();
        let p = self.degree;
        let i = self.span(t);
        let mut out = vec![0.0; nb];
        match deriv_order {
            0 => {
                let vals = self.nonzero_values(i, t, p);
                for (r, v) in vals.into_iter().enumerate() {
                    out[i - p + r] = v;
                }
            }
            1 => {
                if p == 0 {
                    return out;
                }
                // degree p-1 values for functions i-p+1 ..= i
                let lower = self.nonzero_values(i, t, p - 1);
                let k = &self.knots;
                let pf = p as f64;
                let lower_at = |idx: usize| -> f64 {
                    // idx is a global function index
                    if idx + p >= i + 1 && idx <= i {
                        lower[idx + p - 1 - i]
                    } else {
                        0.0
                    }
                };
                for idx in (i - p)..=i {
                    let d1 = k[idx + p] - k[idx];
                    let d2 = k[idx + p + 1] - k[idx + 1];
                    let a = if d1 > 0.0 { lower_at(idx) / d1 } else { 0.0 };
                    let b = if d2 > 0.0 && idx + 1 < nb + 1 {
                        lower_at(idx + 1) / d2
                    } else {
                        0.0
                    };
                    out[idx] = pf * (a - b);
                }
            }
            _ => panic!("only value and first derivative are supported"),
        }
        out
    }
}

/// Clamped knot vector with `num_basis - degree - 1` equidistant interior knots
/// on `[lo, hi]`.
pub fn make_knots(lo: f64, hi: f64, num_basis: usize, degree: usize) -> Result<KnotVector> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(BctmError::InvalidInterval { lo, hi });
    }
    if num_basis < degree + 1 {
        return Err(BctmError::TooFewBasisFunctions {
            requested: num_basis,
            required: degree + 1,
            degree,
        });
    }
    let interior = num_basis - degree - 1;
    let mut knots = Vec::with_capacity(num_basis + degree + 1);
    knots.extend(std::iter::repeat_n(lo, degree + 1));
    let width = (hi - lo) / (interior + 1) as f64;
    for i in 1..=interior {
        knots.push(lo + width * i as f64);
    }
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    Ok(KnotVector {
        degree,
        knots,
        lo,
        hi,
    })
}

/// Knots over the finite values' range, widened by [`RANGE_EXPANSION`] per side.
pub fn knots_for_data(values: &[f64], num_basis: usize, degree: usize) -> Result<KnotVector> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo < hi) {
        return Err(BctmError::InvalidInterval { lo, hi });
    }
    let pad = (hi - lo) * RANGE_EXPANSION;
    make_knots(lo - pad, hi + pad, num_basis, degree)
}

#[derive(Clone, Debug)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub is_derivative: bool,
    pub source: String,
    /// Number of evaluation points that were clamped into the domain.
    pub clamped: usize,
}

impl BasisMatrix {
    pub fn new(values: DMatrix<f64>, is_derivative: bool, source: impl Into<String>) -> Self {
        Self {
            values,
            is_derivative,
            source: source.into(),
            clamped: 0,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

pub fn eval_basis(kv: &KnotVector, points: &[f64], deriv_order: u8) -> BasisMatrix {
    let nb = kv.num_basis();
    let mut values = DMatrix::zeros(points.len(), nb);
    let mut clamped = 0;
    for (r, &t) in points.iter().enumerate() {
        let (tc, was_clamped) = kv.clamp(t);
        clamped += was_clamped as usize;
        for (c, v) in kv.row(tc, deriv_order).into_iter().enumerate() {
            values[(r, c)] = v;
        }
    }
    if clamped > 0 {
        log::warn!("{clamped} evaluation points clamped into the spline domain");
    }
    BasisMatrix {
        values,
        is_derivative: deriv_order == 1,
        source: format!("bspline(degree={}, D={nb})", kv.degree),
        clamped,
    }
}

/// Kronecker product of a single pair of rows, `a` outer and `b` inner.
pub fn kron_row(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// Row-wise Kronecker product; column `d1 * D2 + d2` holds `A[i,d1] * B[i,d2]`.
pub fn row_kronecker(a: &BasisMatrix, b: &BasisMatrix) -> Result<BasisMatrix> {
    if a.nrows() != b.nrows() {
        return Err(BctmError::RowMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    let (d1, d2) = (a.ncols(), b.ncols());
    let mut values = DMatrix::zeros(a.nrows(), d1 * d2);
    for i in 0..a.nrows() {
        for j in 0..d1 {
            let av = a.values[(i, j)];
            for k in 0..d2 {
                values[(i, j * d2 + k)] = av * b.values[(i, k)];
            }
        }
    }
    Ok(BasisMatrix {
        values,
        is_derivative: a.is_derivative || b.is_derivative,
        source: format!("({}) x ({})", a.source, b.source),
        clamped: a.clamped + b.clamped,
    })
}

/// Subtract column means; the means are returned so that prediction rows can
/// be shifted by the training values.
pub fn center_columns(b: &BasisMatrix) -> (BasisMatrix, DVector<f64>) {
    let n = b.nrows().max(1) as f64;
    let means = DVector::from_iterator(b.ncols(), b.values.column_iter().map(|c| c.sum() / n));
    let mut values = b.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (
        BasisMatrix {
            values,
            is_derivative: b.is_derivative,
            source: format!("centered({})", b.source),
            clamped: b.clamped,
        },
        means,
    )
}

/// Apply stored training means to new rows.
pub fn center_with(b: &BasisMatrix, means: &DVector<f64>) -> Result<BasisMatrix> {
    if b.ncols() != means.len() {
        return Err(BctmError::LengthMismatch {
            left: b.ncols(),
            right: means.len(),
        });
    }
    let mut values = b.values.clone();
    for (j, mut col) in values.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    Ok(BasisMatrix {
        values,
        is_derivative: b.is_derivative,
        source: format!("centered({})", b.source),
        clamped: b.clamped,
    })
}

/// `order`-th difference matrix of size `(n - order) x n`.
pub fn difference_matrix(n: usize, order: usize) -> DMatrix<f64> {
    let mut d = DMatrix::<f64>::identity(n, n);
    for _ in 0..order {
        let rows = d.nrows();
        if rows < 2 {
            return DMatrix::zeros(0, n);
        }
        d = DMatrix::from_fn(rows - 1, n, |r, c| d[(r + 1, c)] - d[(r, c)]);
    }
    d
}

/// Response-direction penalty for monotone terms: `D^T D` where `D` is
/// `(n-2) x n` with `D[r, r+1] = 1`, `D[r, r+2] = -1`. The first coefficient is
/// left unpenalised; the remaining ones receive a first-order random walk.
pub fn partial_first_difference_penalty(n: usize) -> DMatrix<f64> {
    if n < 3 {
        return DMatrix::zeros(n, n);
    }
    let mut d = DMatrix::zeros(n - 2, n);
    for r in 0..n - 2 {
        d[(r, r + 1)] = 1.0;
        d[(r, r + 2)] = -1.0;
    }
    d.transpose() * d
}
