//! Declarative model description, serialized as JSON.

use serde::{Deserialize, Serialize};

use crate::error::{BctmError, Result};
use crate::reference::ReferenceDistribution;
use crate::sampler::SamplerConfig;

fn default_degree() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSpec {
    /// `a(y) = 1`: a pure shift in the transformation.
    Intercept,
    /// `a(y) = (1, y)`.
    Linear,
    /// Monotone B-spline basis in the response.
    Spline {
        num_basis: usize,
        #[serde(default = "default_degree")]
        degree: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateSpec {
    None,
    Linear(Vec<String>),
    Spline {
        column: String,
        num_basis: usize,
        #[serde(default = "default_degree")]
        degree: usize,
    },
    RandomEffect {
        column: String,
    },
    /// Intrinsic GMRF over regions; `edges` lists neighbouring region pairs.
    /// It may be left out of a JSON document and supplied separately.
    Spatial {
        column: String,
        #[serde(default)]
        edges: Vec<(String, String)>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperpriorSpec {
    /// Inverse gamma prior on the smoothing variance.
    Ig { a: f64, b: f64 },
    /// Weibull(0.5, theta) prior on the smoothing variance; `theta` is elicited
    /// from `P(max |beta| <= c) = 1 - alpha` when absent.
    Sd {
        #[serde(default = "default_sd_c")]
        c: f64,
        #[serde(default = "default_sd_alpha")]
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        theta: Option<f64>,
    },
}

fn default_sd_c() -> f64 {
    3.0
}
fn default_sd_alpha() -> f64 {
    0.01
}

impl Default for HyperpriorSpec {
    fn default() -> Self {
        HyperpriorSpec::Ig { a: 1.0, b: 0.001 }
    }
}

impl HyperpriorSpec {
    pub fn sd() -> Self {
        HyperpriorSpec::Sd {
            c: default_sd_c(),
            alpha: default_sd_alpha(),
            theta: None,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            HyperpriorSpec::Ig { a, b } if !(a > 0.0 && b > 0.0) => Err(BctmError::InvalidModel(format!(
                "inverse gamma hyperprior needs a, b > 0, got ({a}, {b})"
            ))),
            HyperpriorSpec::Sd { c, alpha, theta } => {
                if !(c > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
                    return Err(BctmError::InvalidModel(format!(
                        "scale-dependent hyperprior needs c > 0 and 0 < alpha < 1, got ({c}, {alpha})"
                    )));
                }
                if matches!(theta, Some(t) if !(t > 0.0)) {
                    return Err(BctmError::InvalidModel("theta must be positive".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    #[serde(default)]
    pub name: String,
    pub response: ResponseSpec,
    pub covariate: CovariateSpec,
    /// Always true for spline responses; may be omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monotone: Option<bool>,
    #[serde(default)]
    pub hyperprior: HyperpriorSpec,
    /// Centre the covariate direction; defaults depend on the basis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<bool>,
}

impl TermSpec {
    pub fn new(name: impl Into<String>, response: ResponseSpec, covariate: CovariateSpec) -> Self {
        Self {
            name: name.into(),
            response,
            covariate,
            monotone: None,
            hyperprior: HyperpriorSpec::default(),
            center: None,
        }
    }

    pub fn with_hyperprior(mut self, h: HyperpriorSpec) -> Self {
        self.hyperprior = h;
        self
    }

    pub fn with_center(mut self, center: bool) -> Self {
        self.center = Some(center);
        self
    }

    pub fn is_monotone(&self) -> bool {
        matches!(self.response, ResponseSpec::Spline { .. })
    }

    pub fn is_global_intercept(&self) -> bool {
        self.response == ResponseSpec::Intercept && self.covariate == CovariateSpec::None
    }

    pub fn depends_on_response(&self) -> bool {
        self.response != ResponseSpec::Intercept
    }

    pub fn centered(&self) -> bool {
        self.center.unwrap_or(match self.covariate {
            CovariateSpec::None | CovariateSpec::Spline { .. } | CovariateSpec::Spatial { .. } => true,
            CovariateSpec::Linear(_) | CovariateSpec::RandomEffect { .. } => false,
        })
    }

    /// Covariate columns this term reads.
    pub fn columns(&self) -> Vec<&str> {
        match &self.covariate {
            CovariateSpec::None => vec![],
            CovariateSpec::Linear(cols) => cols.iter().map(|s| s.as_str()).collect(),
            CovariateSpec::Spline { column, .. }
            | CovariateSpec::RandomEffect { column }
            | CovariateSpec::Spatial { column, .. } => vec![column.as_str()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub reference: ReferenceDistribution,
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

impl ModelSpec {
    pub fn new(reference: ReferenceDistribution, terms: Vec<TermSpec>) -> Self {
        Self {
            reference,
            terms,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut spec: ModelSpec =
            serde_json::from_str(s).map_err(|e| BctmError::InvalidModel(format!("malformed model JSON: {e}")))?;
        spec.fill_names();
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    /// Assign `term<k>` to unnamed terms.
    pub fn fill_names(&mut self) {
        for (k, t) in self.terms.iter_mut().enumerate() {
            if t.name.is_empty() {
                t.name = format!("term{k}");
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.terms.iter().any(|t| t.depends_on_response()) {
            return Err(BctmError::InvalidModel(
                "at least one term must depend on the response".into(),
            ));
        }
        if self.terms.iter().filter(|t| t.is_global_intercept()).count() > 1 {
            return Err(BctmError::InvalidModel("more than one pure intercept term".into()));
        }
        for (k, t) in self.terms.iter().enumerate() {
            if t.monotone == Some(true) && !t.is_monotone() {
                return Err(BctmError::InvalidModel(format!(
                    "term {k}: monotone terms need a spline response basis"
                )));
            }
            if t.monotone == Some(false) && t.is_monotone() {
                return Err(BctmError::InvalidModel(format!(
                    "term {k}: spline response bases are always monotone"
                )));
            }
            if t.name.contains(',') {
                return Err(BctmError::InvalidModel(format!("term name `{}` contains a comma", t.name)));
            }
            if self.terms[..k].iter().any(|o| !o.name.is_empty() && o.name == t.name) {
                return Err(BctmError::InvalidModel(format!("duplicate term name `{}`", t.name)));
            }
            match &t.covariate {
                CovariateSpec::Linear(cols) if cols.is_empty() => {
                    return Err(BctmError::InvalidModel(format!("term {k}: empty linear covariate list")));
                }
                CovariateSpec::Spatial { edges, .. } if edges.is_empty() => {
                    return Err(BctmError::InvalidModel(format!("term {k}: spatial term without adjacency")));
                }
                _ => {}
            }
            t.hyperprior.validate()?;
        }
        self.sampler.validate()
    }
}
