//! Responses with censoring or discreteness metadata, plus a named covariate table.

use std::collections::BTreeMap;

use crate::error::{BctmError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Response {
    Exact(f64),
    /// Observed only as `Y > lower`.
    RightCensored(f64),
    /// Observed only as `Y <= upper`.
    LeftCensored(f64),
    IntervalCensored(f64, f64),
    /// Zero-based index into the ordered level list.
    Discrete(usize),
}

impl Response {
    /// Decode the `(status, y_left, y_right)` encoding: `exact` reads either
    /// bound (both must agree when given), `right` the lower bound, `left` the
    /// upper bound and `interval` both.
    pub fn from_status(status: &str, left: Option<f64>, right: Option<f64>) -> Result<Self> {
        let need = |v: Option<f64>, which: &str| {
            v.ok_or_else(|| BctmError::InvalidData(format!("status `{status}` needs {which}")))
        };
        match status.trim().to_ascii_lowercase().as_str() {
            "exact" => match (left, right) {
                (Some(a), Some(b)) if a != b => Err(BctmError::InvalidData(format!(
                    "exact observation with differing bounds {a} and {b}"
                ))),
                (Some(a), _) | (None, Some(a)) => Ok(Response::Exact(a)),
                (None, None) => Err(BctmError::InvalidData("exact observation without a value".into())),
            },
            "right" => Ok(Response::RightCensored(need(left, "y_left")?)),
            "left" => Ok(Response::LeftCensored(need(right, "y_right")?)),
            "interval" => {
                let (lo, hi) = (need(left, "y_left")?, need(right, "y_right")?);
                if !(lo < hi) {
                    return Err(BctmError::InvalidInterval { lo, hi });
                }
                Ok(Response::IntervalCensored(lo, hi))
            }
            other => Err(BctmError::InvalidData(format!(
                "unknown status `{other}`; expected exact, right, left or interval"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscreteSupport {
    /// `y_1 < ... < y_K`; the last level takes the remaining mass.
    Finite,
    /// Countably infinite support: every level has probability
    /// `F(h(y_k)) - F(h(y_{k-1}))`.
    Countable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLevels {
    pub levels: Vec<f64>,
    pub support: DiscreteSupport,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Covariate {
    Real(Vec<f64>),
    Factor(Vec<String>),
}

impl Covariate {
    pub fn len(&self) -> usize {
        match self {
            Covariate::Real(v) => v.len(),
            Covariate::Factor(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Column-oriented covariate table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Covariates {
    n: usize,
    columns: BTreeMap<String, Covariate>,
}

fn factor_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl Covariates {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            columns: BTreeMap::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn insert(&mut self, name: impl Into<String>, column: Covariate) -> Result<()> {
        let name = name.into();
        if column.len() != self.n {
            return Err(BctmError::InvalidData(format!(
                "column `{name}` has {} rows, expected {}",
                column.len(),
                self.n
            )));
        }
        self.columns.insert(name, column);
        Ok(())
    }

    pub fn with_real(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.insert(name, Covariate::Real(values))?;
        Ok(self)
    }

    pub fn with_factor(mut self, name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        self.insert(name, Covariate::Factor(labels))?;
        Ok(self)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(|s| s.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Covariate> {
        self.columns.get(name)
    }

    pub fn real(&self, name: &str) -> Result<&[f64]> {
        match self.columns.get(name) {
            Some(Covariate::Real(v)) => Ok(v),
            Some(Covariate::Factor(_)) => Err(BctmError::CovariateType {
                column: name.to_string(),
                expected: "numeric",
            }),
            None => Err(BctmError::UnknownCovariate(name.to_string())),
        }
    }

    /// Labels of a grouping column; numeric columns are converted to labels.
    pub fn labels(&self, name: &str) -> Result<Vec<String>> {
        match self.columns.get(name) {
            Some(Covariate::Factor(v)) => Ok(v.clone()),
            Some(Covariate::Real(v)) => Ok(v.iter().map(|&x| factor_label(x)).collect()),
            None => Err(BctmError::UnknownCovariate(name.to_string())),
        }
    }

    /// Rows `idx` of every column.
    pub fn select(&self, idx: &[usize]) -> Covariates {
        let columns = self
            .columns
            .iter()
            .map(|(k, c)| {
                let c = match c {
                    Covariate::Real(v) => Covariate::Real(idx.iter().map(|&i| v[i]).collect()),
                    Covariate::Factor(v) => Covariate::Factor(idx.iter().map(|&i| v[i].clone()).collect()),
                };
                (k.clone(), c)
            })
            .collect();
        Covariates {
            n: idx.len(),
            columns,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet {
    pub responses: Vec<Response>,
    pub discrete: Option<DiscreteLevels>,
    pub covariates: Covariates,
}

impl DataSet {
    pub fn new(responses: Vec<Response>, covariates: Covariates) -> Result<Self> {
        let ds = Self {
            responses,
            discrete: None,
            covariates,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn exact(y: Vec<f64>, covariates: Covariates) -> Result<Self> {
        Self::new(y.into_iter().map(Response::Exact).collect(), covariates)
    }

    pub fn discrete(indices: Vec<usize>, levels: DiscreteLevels, covariates: Covariates) -> Result<Self> {
        let ds = Self {
            responses: indices.into_iter().map(Response::Discrete).collect(),
            discrete: Some(levels),
            covariates,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.nrows() != self.responses.len() {
            return Err(BctmError::RowMismatch {
                left: self.responses.len(),
                right: self.covariates.nrows(),
            });
        }
        if let Some(d) = &self.discrete {
            if d.levels.is_empty() {
                return Err(BctmError::InvalidData("discrete response without levels".into()));
            }
            if d.levels.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(BctmError::InvalidData("discrete levels must be strictly increasing".into()));
            }
        }
        for (i, r) in self.responses.iter().enumerate() {
            let ok = match *r {
                Response::Exact(y) | Response::RightCensored(y) | Response::LeftCensored(y) => y.is_finite(),
                Response::IntervalCensored(lo, hi) => {
                    if !(lo < hi) {
                        return Err(BctmError::InvalidData(format!(
                            "row {i}: interval censoring needs lower < upper, got ({lo}, {hi})"
                        )));
                    }
                    lo.is_finite() && hi.is_finite()
                }
                Response::Discrete(k) => match &self.discrete {
                    Some(d) => k < d.levels.len(),
                    None => {
                        return Err(BctmError::InvalidData(format!(
                            "row {i}: discrete response without level list"
                        )))
                    }
                },
            };
            if !ok {
                return Err(BctmError::InvalidData(format!("row {i}: invalid response {r:?}")));
            }
        }
        Ok(())
    }

    /// Every finite response value that the transformation is evaluated at.
    pub fn response_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for r in &self.responses {
            match *r {
                Response::Exact(y) | Response::RightCensored(y) | Response::LeftCensored(y) => out.push(y),
                Response::IntervalCensored(lo, hi) => {
                    out.push(lo);
                    out.push(hi);
                }
                Response::Discrete(_) => {}
            }
        }
        if let Some(d) = &self.discrete {
            out.extend(d.levels.iter().copied());
        }
        out
    }

    pub fn select(&self, idx: &[usize]) -> DataSet {
        DataSet {
            responses: idx.iter().map(|&i| self.responses[i]).collect(),
            discrete: self.discrete.clone(),
            covariates: self.covariates.select(idx),
        }
    }
}
