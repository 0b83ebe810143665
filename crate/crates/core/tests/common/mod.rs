#![allow(dead_code)]

use bctm::data::{Covariates, DataSet, DiscreteLevels, DiscreteSupport, Response};
use bctm::likelihood::{grad_beta, log_likelihood, log_posterior, ParameterState};
use bctm::model::ModelDesign;
use bctm::model::{CovariateSpec, ModelSpec, ResponseSpec, TermSpec};
use bctm::reference::ReferenceDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn covariates(n: usize, rng: &mut ChaCha8Rng) -> Covariates {
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let g: Vec<String> = (0..n).map(|i| format!("g{}", i % 3)).collect();
    Covariates::new(n)
        .with_real("x1", x1)
        .unwrap()
        .with_real("x2", x2)
        .unwrap()
        .with_factor("g", g)
        .unwrap()
}

/// Heteroscedastic responses depending on `x1` and `x2`.
pub fn exact_data(n: usize, seed: u64) -> DataSet {
    let mut r = rng(seed);
    let cov = covariates(n, &mut r);
    let x1 = cov.real("x1").unwrap().to_vec();
    let x2 = cov.real("x2").unwrap().to_vec();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut r);
            (x2[i] + e) / (x1[i] + 0.5)
        })
        .collect();
    DataSet::exact(y, cov).unwrap()
}

/// Same generator with a random mix of right, left and interval censoring.
pub fn censored_data(n: usize, seed: u64) -> DataSet {
    let base = exact_data(n, seed);
    let mut r = rng(seed + 1000);
    let responses = base
        .responses
        .iter()
        .map(|resp| {
            let y = match *resp {
                Response::Exact(y) => y,
                _ => unreachable!(),
            };
            match r.random_range(0..4) {
                0 => Response::Exact(y),
                1 => Response::RightCensored(y - r.random_range(0.0..0.5)),
                2 => Response::LeftCensored(y + r.random_range(0.0..0.5)),
                _ => {
                    let lo = y - r.random_range(0.05..0.5);
                    Response::IntervalCensored(lo, y + r.random_range(0.05..0.5))
                }
            }
        })
        .collect();
    DataSet::new(responses, base.covariates).unwrap()
}

/// Ordinal responses on `k` levels obtained by cutting the exact generator.
pub fn ordinal_data(n: usize, k: usize, seed: u64) -> DataSet {
    let base = exact_data(n, seed);
    let levels: Vec<f64> = (0..k).map(|i| i as f64).collect();
    let idx = base
        .responses
        .iter()
        .map(|resp| match *resp {
            Response::Exact(y) => ((y + 2.0).floor().max(0.0) as usize).min(k - 1),
            _ => unreachable!(),
        })
        .collect();
    DataSet::discrete(
        idx,
        DiscreteLevels {
            levels,
            support: DiscreteSupport::Finite,
        },
        base.covariates,
    )
    .unwrap()
}

pub fn spline(d: usize) -> ResponseSpec {
    ResponseSpec::Spline { num_basis: d, degree: 3 }
}

pub fn lin(cols: &[&str]) -> CovariateSpec {
    CovariateSpec::Linear(cols.iter().map(|s| s.to_string()).collect())
}

pub fn xspline(col: &str, d: usize) -> CovariateSpec {
    CovariateSpec::Spline {
        column: col.into(),
        num_basis: d,
        degree: 3,
    }
}

/// Shift model: linear y plus linear and nonlinear covariate shifts.
pub fn shift_model() -> ModelSpec {
    ModelSpec::new(
        ReferenceDistribution::StandardNormal,
        vec![
            TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None),
            TermSpec::new("x1", ResponseSpec::Intercept, lin(&["x1"])),
            TermSpec::new("x2", ResponseSpec::Intercept, xspline("x2", 8)),
        ],
    )
}

/// Varying-coefficient model `(1, y) (x) (1, x1, x2)`.
pub fn vcm_model() -> ModelSpec {
    ModelSpec::new(
        ReferenceDistribution::StandardNormal,
        vec![
            TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None),
            TermSpec::new("vc", ResponseSpec::Linear, lin(&["x1", "x2"])),
        ],
    )
}

/// Monotone tensor model with a random effect.
pub fn tensor_model(reference: ReferenceDistribution) -> ModelSpec {
    ModelSpec::new(
        reference,
        vec![
            TermSpec::new("te", spline(6), xspline("x1", 5)),
            TermSpec::new("te2", spline(5), lin(&["x2"])),
            TermSpec::new("re", ResponseSpec::Intercept, CovariateSpec::RandomEffect { column: "g".into() }),
        ],
    )
}

/// Initial state plus Gaussian noise of scale `sd`, with random smoothing
/// variances and anisotropy weights; states hitting the likelihood floor are
/// redrawn.
pub fn random_state(design: &ModelDesign, rng: &mut ChaCha8Rng, sd: f64) -> ParameterState {
    let noise = Normal::new(0.0, sd).unwrap();
    loop {
        let mut s = ParameterState::initial(design);
        for b in s.beta.iter_mut() {
            *b += noise.sample(rng);
        }
        for (j, t) in design.terms.iter().enumerate() {
            s.tau2[j] = if t.samples_tau2() { rng.random_range(-2.0f64..2.0).exp() } else { 1.0 };
            s.omega[j] = t.omega_grid[rng.random_range(0..t.omega_grid.len())];
        }
        let (_, _, diag) = log_likelihood(design, &s.beta, false);
        if diag.floored == 0 {
            return s;
        }
    }
}

/// Largest relative deviation of the analytic gradient from central
/// differences.
pub fn max_gradient_error(design: &ModelDesign, state: &ParameterState) -> f64 {
    let an = grad_beta(state, design);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..an.len() {
        let mut up = state.clone();
        up.beta[k] += h;
        let mut dn = state.clone();
        dn.beta[k] -= h;
        let fd = (log_posterior(&up, design) - log_posterior(&dn, design)) / (2.0 * h);
        worst = worst.max((fd - an[k]).abs() / an[k].abs().max(1.0));
    }
    worst
}
