mod common;

use bctm::data::{Covariates, DataSet};
use bctm::inference::{log_score, posterior_cdf, posterior_quantile, waic, PredictiveCdf};
use bctm::likelihood::row_log_likelihood;
use bctm::model::{CovariateSpec, ModelDesign, ModelSpec, ResponseSpec, TermSpec};
use bctm::reference::ReferenceDistribution;
use bctm::sampler::{fit, Fit, PosteriorDraws, SamplerConfig};
use bctm::simharness::{gen_vcm, lin_bctm, VcmTruth};
use common::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn draws_from(design: &ModelDesign, betas: Vec<Vec<f64>>) -> PosteriorDraws {
    let s = betas.len();
    let nt = design.terms.len();
    PosteriorDraws {
        coefficient_names: design.coefficient_names(),
        term_names: design.terms.iter().map(|t| t.name.clone()).collect(),
        beta: betas,
        tau2: vec![vec![1.0; nt]; s],
        omega: vec![design.terms.iter().map(|t| t.omega_grid[0]).collect(); s],
        chain: vec![0; s],
        chains: Vec::new(),
        ess: vec![0.0; design.dim()],
        iterations: s,
        warmup: 0,
        burn_in: 0,
    }
}

fn perturbed(design: &ModelDesign, s: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let base = design.initial_beta();
    (0..s)
        .map(|_| base.iter().map(|b| b + 0.1 * r.random_range(-1.0..1.0)).collect())
        .collect()
}

fn identity_spec() -> ModelSpec {
    ModelSpec::new(
        ReferenceDistribution::StandardNormal,
        vec![TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None)],
    )
}

fn identity_fit(n: usize, seed: u64) -> Fit {
    let mut r = rng(seed);
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let data = DataSet::exact(y, Covariates::new(n)).unwrap();
    fit(&identity_spec(), &data, &SamplerConfig::fast().with_seed(seed)).unwrap()
}

#[test]
fn single_draw_estimate_is_that_draws_curve() {
    let data = exact_data(80, 1);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::StandardNormal), &data).unwrap();
    let beta = perturbed(&design, 1, 2).remove(0);
    let draws = draws_from(&design, vec![beta.clone()]);
    let grid: Vec<f64> = (0..30).map(|k| -3.0 + 0.2 * k as f64).collect();
    let est = posterior_cdf(&draws, &design, &data.covariates, 5, &grid).unwrap();
    let rows = design.covariate_rows(&data.covariates).unwrap();
    let (h, _) = design.transform_grid(&beta, &rows, 5, &grid);
    for k in 0..grid.len() {
        let f = design.reference.cdf(h[k]);
        assert_eq!(est.cdf_mean[k], f);
        assert_eq!(est.cdf_lower[k], f);
        assert_eq!(est.cdf_upper[k], f);
    }
}

#[test]
fn mean_curve_is_monotone_and_bracketed() {
    let data = exact_data(80, 3);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::StandardLogistic), &data).unwrap();
    let draws = draws_from(&design, perturbed(&design, 40, 4));
    let grid: Vec<f64> = (0..60).map(|k| -6.0 + 0.2 * k as f64).collect();
    for row in [0, 17, 42] {
        let est = posterior_cdf(&draws, &design, &data.covariates, row, &grid).unwrap();
        for k in 0..grid.len() {
            assert!((0.0..=1.0).contains(&est.cdf_mean[k]));
            assert!(est.cdf_lower[k] <= est.cdf_mean[k] && est.cdf_mean[k] <= est.cdf_upper[k]);
            assert!(est.density_mean[k] >= 0.0);
            if k > 0 {
                assert!(est.cdf_mean[k] >= est.cdf_mean[k - 1] - 1e-10);
            }
        }
    }
}

#[test]
fn per_draw_quantiles_invert_the_cdf() {
    let data = exact_data(80, 5);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::StandardNormal), &data).unwrap();
    let betas = perturbed(&design, 5, 6);
    let all = draws_from(&design, betas.clone());
    for alpha in [0.1, 0.5, 0.9] {
        let q = posterior_quantile(&all, &design, &data.covariates, 3, alpha).unwrap();
        assert!(q.lower <= q.mean && q.mean <= q.upper);
        for (s, b) in betas.iter().enumerate() {
            if q.draws[s] <= design.response_domain().0 || q.draws[s] >= design.response_domain().1 {
                continue;
            }
            let one = draws_from(&design, vec![b.clone()]);
            let est = posterior_cdf(&one, &design, &data.covariates, 3, &[q.draws[s]]).unwrap();
            assert!((est.cdf_mean[0] - alpha).abs() < 1e-6, "draw {s}: {}", est.cdf_mean[0]);
        }
    }
    assert!(posterior_quantile(&all, &design, &data.covariates, 3, 1.0).is_err());
}

#[test]
fn unreachable_alpha_returns_boundary() {
    let data = exact_data(60, 7);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::StandardNormal), &data).unwrap();
    let draws = draws_from(&design, perturbed(&design, 3, 8));
    let q = posterior_quantile(&draws, &design, &data.covariates, 0, 1e-300).unwrap();
    assert_eq!(q.at_boundary, 3);
    assert_eq!(q.mean, design.response_domain().0);
}

#[test]
fn empty_draws_are_rejected() {
    let data = exact_data(40, 9);
    let design = ModelDesign::build(&vcm_model(), &data).unwrap();
    let draws = draws_from(&design, Vec::new());
    assert!(posterior_cdf(&draws, &design, &data.covariates, 0, &[0.0]).is_err());
    assert!(waic(&draws, &design).is_err());
}

#[test]
fn identity_model_recovers_standard_normal() {
    let f = identity_fit(500, 10);
    let grid: Vec<f64> = (0..81).map(|k| -4.0 + 0.1 * k as f64).collect();
    let est = posterior_cdf(&f.draws, &f.design, &Covariates::new(1), 0, &grid).unwrap();
    let sup = grid
        .iter()
        .zip(&est.cdf_mean)
        .map(|(&y, &c)| (c - ReferenceDistribution::StandardNormal.cdf(y)).abs())
        .fold(0.0, f64::max);
    assert!(sup < 0.02, "sup-norm {sup}");
    let med = posterior_quantile(&f.draws, &f.design, &Covariates::new(1), 0, 0.5).unwrap();
    assert!(med.mean.abs() < 0.15, "median {}", med.mean);
    assert!(med.lower < 0.0 && 0.0 < med.upper);
}

#[test]
fn identical_draws_have_zero_effective_parameters() {
    let data = exact_data(60, 11);
    let design = ModelDesign::build(&vcm_model(), &data).unwrap();
    let b = design.initial_beta();
    let draws = draws_from(&design, vec![b.clone(); 7]);
    let score = waic(&draws, &design).unwrap();
    let ll: f64 = row_log_likelihood(&design, &b).iter().sum();
    assert!(score.p_waic.abs() < 1e-12);
    assert!((score.waic + 2.0 * ll).abs() < 1e-8);
    assert!(score.p_dic.abs() < 1e-8);
    assert!((score.lppd - ll).abs() < 1e-8);
}

#[test]
fn waic_ignores_draw_order() {
    let data = censored_data(60, 12);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::MinimumExtremeValue), &data).unwrap();
    let betas = perturbed(&design, 25, 13);
    let mut rev = betas.clone();
    rev.reverse();
    let a = waic(&draws_from(&design, betas), &design).unwrap();
    let b = waic(&draws_from(&design, rev), &design).unwrap();
    assert!((a.waic - b.waic).abs() < 1e-9);
    assert!((a.dic - b.dic).abs() < 1e-9);
    assert!(a.p_waic >= 0.0);
}

#[test]
fn predictive_cdf_inverts_by_interpolation() {
    let data = exact_data(80, 14);
    let design = ModelDesign::build(&tensor_model(ReferenceDistribution::StandardNormal), &data).unwrap();
    let draws = draws_from(&design, perturbed(&design, 10, 15));
    let rows = design.covariate_rows(&data.covariates).unwrap();
    let pred = PredictiveCdf::new(&draws, &design, &rows, 2, 400).unwrap();
    for alpha in [0.05, 0.3, 0.5, 0.8, 0.95] {
        let lo = pred.cdf.first().copied().unwrap();
        let hi = pred.cdf.last().copied().unwrap();
        if alpha <= lo || alpha >= hi {
            continue;
        }
        assert!((pred.cdf_at(pred.quantile(alpha)) - alpha).abs() < 1e-9);
    }
}

#[test]
fn vcm_median_at_reference_point() {
    let mut r = rng(16);
    let (data, truth) = gen_vcm(200, 0, &mut r).unwrap();
    assert_eq!(truth, VcmTruth { p: 0 });
    let f = fit(&lin_bctm(0), &data, &SamplerConfig::fast().with_seed(16)).unwrap();
    let x = Covariates::new(1).with_real("x1", vec![0.5]).unwrap().with_real("x2", vec![1.0]).unwrap();
    let med = posterior_quantile(&f.draws, &f.design, &x, 0, 0.5).unwrap();
    assert!((med.mean - truth.quantile(0.5, 0.5, 1.0)).abs() < 0.25, "median {}", med.mean);
    assert!((truth.quantile(0.5, 0.5, 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn irrelevant_term_does_not_lower_lppd_beyond_noise() {
    // held-out log score as well as in-sample lppd, over 20 replications
    let mut worse = 0;
    for rep in 0..20u64 {
        let mut r = rng(100 + rep);
        let (train, _) = gen_vcm(200, 1, &mut r).unwrap();
        let cfg = SamplerConfig::fast().with_seed(rep);
        let base = fit(&lin_bctm(0), &train, &cfg).unwrap();
        let with_noise = fit(&lin_bctm(1), &train, &cfg).unwrap();
        let a = waic(&base.draws, &base.design).unwrap();
        let b = waic(&with_noise.draws, &with_noise.design).unwrap();
        // MC noise of lppd is well below one nat here
        if b.lppd < a.lppd - 1.0 {
            worse += 1;
        }
        let (test, _) = gen_vcm(100, 1, &mut r).unwrap();
        assert!(log_score(&base.draws, &base.design, &test).unwrap().is_finite());
    }
    assert_eq!(worse, 0);
}
