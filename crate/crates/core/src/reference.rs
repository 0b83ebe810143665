//! Parameter-free reference distributions `F_Z`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceDistribution {
    #[serde(rename = "normal")]
    StandardNormal,
    #[serde(rename = "logistic")]
    StandardLogistic,
    /// Minimum extreme value, `F(z) = 1 - exp(-exp(z))`.
    #[serde(rename = "mev")]
    MinimumExtremeValue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefEval {
    pub cdf: f64,
    pub log_pdf: f64,
    pub dlog_pdf: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - exp(-w))` for `w >= 0`.
fn log1mexp_neg(w: f64) -> f64 {
    if w > std::f64::consts::LN_2 {
        (-(-w).exp()).ln_1p()
    } else {
        (-(-w).exp_m1()).ln()
    }
}

fn normal_log_cdf(z: f64) -> f64 {
    if z < -20.0 {
        let z2 = z * z;
        let inv = 1.0 / z2;
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv.powi(3) + 105.0 * inv.powi(4);
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
    } else if z > 5.0 {
        (-0.5 * erfc(z / std::f64::consts::SQRT_2)).ln_1p()
    } else {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    }
}

impl ReferenceDistribution {
    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Some(Self::StandardNormal),
            "logistic" => Some(Self::StandardLogistic),
            "mev" | "minimum_extreme_value" => Some(Self::MinimumExtremeValue),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::StandardNormal => "normal",
            Self::StandardLogistic => "logistic",
            Self::MinimumExtremeValue => "mev",
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => 0.5 * erfc(-z / std::f64::consts::SQRT_2),
            Self::StandardLogistic => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Self::MinimumExtremeValue => -(-z.exp()).exp_m1(),
        }
    }

    /// Survivor function `1 - F(z)`, evaluated without cancellation.
    pub fn sf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => 0.5 * erfc(z / std::f64::consts::SQRT_2),
            Self::StandardLogistic => Self::StandardLogistic.cdf(-z),
            Self::MinimumExtremeValue => (-z.exp()).exp(),
        }
    }

    pub fn log_cdf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => normal_log_cdf(z),
            Self::StandardLogistic => -softplus(-z),
            Self::MinimumExtremeValue => {
                if z < -30.0 {
                    // ln(w - w^2/2 + ...) with w = e^z
                    z - 0.5 * z.exp()
                } else {
                    log1mexp_neg(z.exp())
                }
            }
        }
    }

    pub fn log_sf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => normal_log_cdf(-z),
            Self::StandardLogistic => -softplus(z),
            Self::MinimumExtremeValue => -z.exp(),
        }
    }

    pub fn log_pdf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => -0.5 * z * z - LN_SQRT_2PI,
            Self::StandardLogistic => -softplus(-z) - softplus(z),
            Self::MinimumExtremeValue => z - z.exp(),
        }
    }

    /// `d/dz log f(z)`.
    pub fn dlog_pdf(&self, z: f64) -> f64 {
        match self {
            Self::StandardNormal => -z,
            Self::StandardLogistic => (-0.5 * z).tanh(),
            Self::MinimumExtremeValue => 1.0 - z.exp(),
        }
    }

    pub fn eval(&self, z: f64) -> RefEval {
        RefEval {
            cdf: self.cdf(z),
            log_pdf: self.log_pdf(z),
            dlog_pdf: self.dlog_pdf(z),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::StandardNormal => {
                use statrs::distribution::{ContinuousCDF, Normal};
                let mut q = Normal::standard().inverse_cdf(p);
                // polish with Newton steps against the erfc-based cdf
                for _ in 0..2 {
                    if !q.is_finite() {
                        break;
                    }
                    let step = (self.cdf(q) - p) / self.log_pdf(q).exp();
                    if step.is_finite() {
                        q -= step;
                    }
                }
                q
            }
            Self::StandardLogistic => (p / (1.0 - p)).ln(),
            Self::MinimumExtremeValue => (-(-p).ln_1p()).ln(),
        }
    }
}

/// `(cdf, log_pdf, dlog_pdf)` at `z`.
pub fn ref_eval(dist: ReferenceDistribution, z: f64) -> RefEval {
    dist.eval(z)
}

pub fn ref_cdf_complement(dist: ReferenceDistribution, z: f64) -> f64 {
    dist.sf(z)
}
