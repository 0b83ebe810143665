use approx::assert_abs_diff_eq;
use bctm::data::{Covariates, DataSet};
use bctm::linalg::sym_eigenvalues;
use bctm::model::{
    build_precision, build_term, reparameterize, CovariateSpec, ElicitationSample, Hyperprior, HyperpriorSpec,
    ModelDesign, ModelSpec, ResponseSpec, TermSpec, PRECISION_RIDGE,
};
use bctm::reference::ReferenceDistribution;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn toy_data(n: usize, seed: u64) -> DataSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x3: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g: Vec<String> = (0..n).map(|i| format!("g{}", i % 4)).collect();
    let cov = Covariates::new(n)
        .with_real("x1", x1)
        .unwrap()
        .with_real("x2", x2)
        .unwrap()
        .with_real("x3", x3)
        .unwrap()
        .with_factor("g", g)
        .unwrap();
    DataSet::exact(y, cov).unwrap()
}

fn spline(d: usize) -> ResponseSpec {
    ResponseSpec::Spline { num_basis: d, degree: 3 }
}

#[test]
fn monotone_spline_without_covariates() {
    let data = toy_data(50, 1);
    let t = TermSpec::new("s", spline(10), CovariateSpec::None).with_center(false);
    let td = build_term(&t, &data).unwrap();
    assert_eq!(td.full_dim(), 10);
    assert_eq!(td.dim(), 10);
    for k in 0..10 {
        for l in 0..10 {
            assert_eq!(td.sigma[(k, l)], if k >= l { 1.0 } else { 0.0 });
        }
    }
    let mut expected = vec![true; 10];
    expected[0] = false;
    assert_eq!(td.exp_mask, expected);
    // centred version drops the constant block
    let tc = build_term(&TermSpec::new("s", spline(10), CovariateSpec::None), &data).unwrap();
    assert_eq!(tc.dim(), 9);
    assert_eq!(tc.full_dim(), 10);
}

#[test]
fn random_effect_block() {
    let data = toy_data(40, 2);
    let t = TermSpec::new("re", ResponseSpec::Intercept, CovariateSpec::RandomEffect { column: "g".into() });
    let td = build_term(&t, &data).unwrap();
    assert_eq!(td.full_dim(), 4);
    assert_eq!(td.k2, DMatrix::<f64>::identity(4, 4));
    let rows = td.covariate_rows(&data.covariates).unwrap();
    for i in 0..rows.nrows() {
        assert_eq!(rows.row(i).sum(), 1.0);
    }
}

#[test]
fn linear_shift_block_has_no_response_derivative() {
    let data = toy_data(30, 3);
    let t = TermSpec::new(
        "lin",
        ResponseSpec::Intercept,
        CovariateSpec::Linear(vec!["x1".into(), "x2".into(), "x3".into()]),
    );
    let td = build_term(&t, &data).unwrap();
    assert_eq!(td.dim(), 3);
    assert_eq!(td.k2, DMatrix::<f64>::zeros(3, 3));
    assert!(!td.penalized);
    assert_eq!(td.hyperprior, Hyperprior::Fixed);
    let b = [0.3, -1.0, 2.0];
    let mut u = vec![0.0; 3];
    let mut up = vec![0.0; 3];
    td.fill_site(0.7, &b, &mut u, &mut up);
    assert_eq!(up, vec![0.0; 3]);
    let (_, cp) = td.joint_basis(0.7, &b);
    assert!(cp.iter().all(|&v| v == 0.0));
}

#[test]
fn unknown_covariate_is_reported() {
    let data = toy_data(10, 4);
    let t = TermSpec::new("z", ResponseSpec::Intercept, CovariateSpec::Linear(vec!["nope".into()]));
    let err = build_term(&t, &data).unwrap_err();
    assert!(err.to_string().contains("nope"));
}

#[test]
fn reparameterize_examples() {
    let data = toy_data(30, 5);
    let t3 = TermSpec::new("s", ResponseSpec::Spline { num_basis: 3, degree: 2 }, CovariateSpec::None)
        .with_center(false);
    let td = build_term(&t3, &data).unwrap();
    let (g, c) = reparameterize(&[0.0, 0.0, 0.0], &td);
    assert_eq!(g, vec![0.0, 1.0, 2.0]);
    assert_eq!(c, vec![1.0, 1.0, 1.0]);

    let data2 = {
        let mut d = toy_data(30, 6);
        let g: Vec<String> = (0..30).map(|i| format!("{}", i % 2)).collect();
        d.covariates.insert("g2", bctm::data::Covariate::Factor(g)).unwrap();
        d
    };
    let t22 = TermSpec::new(
        "t",
        ResponseSpec::Spline { num_basis: 2, degree: 1 },
        CovariateSpec::RandomEffect { column: "g2".into() },
    );
    let td = build_term(&t22, &data2).unwrap();
    let (b11, b12, b21, b22) = (0.3, -0.4, 0.5, -1.2);
    let (g, c) = reparameterize(&[b11, b12, b21, b22], &td);
    let expected = [b11, b12, b11 + f64::exp(b21), b12 + f64::exp(b22)];
    for k in 0..4 {
        assert_abs_diff_eq!(g[k], expected[k], epsilon = 1e-15);
    }
    assert_eq!(c[0], 1.0);
    assert_abs_diff_eq!(c[3], f64::exp(b22), epsilon = 1e-15);

    // non-monotone terms pass through
    let tl = TermSpec::new("l", ResponseSpec::Linear, CovariateSpec::None).with_center(false);
    let td = build_term(&tl, &data).unwrap();
    let (g, c) = reparameterize(&[-2.0, 3.0], &td);
    assert_eq!(g, vec![-2.0, 3.0]);
    assert_eq!(c, vec![1.0, 1.0]);
}

#[test]
fn gamma_differences_positive_and_clip_guard() {
    let data = toy_data(30, 7);
    let t = TermSpec::new("s", spline(6), CovariateSpec::Spline { column: "x1".into(), num_basis: 5, degree: 3 });
    let td = build_term(&t, &data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let beta: Vec<f64> = (0..td.full_dim()).map(|_| 5.0 * rng.random_range(-1.0..1.0)).collect();
        let (g, _) = reparameterize(&beta, &td);
        let d2 = td.d2();
        for k in d2..g.len() {
            assert!(g[k] > g[k - d2]);
        }
    }
    let big = vec![1000.0; td.full_dim()];
    let (g, c) = reparameterize(&big, &td);
    assert!(g.iter().all(|v| v.is_finite()));
    assert!(c.iter().all(|v| v.is_finite()));
}

#[test]
fn penalty_structure() {
    let data = toy_data(30, 9);
    let t = TermSpec::new("s", spline(6), CovariateSpec::None).with_center(false);
    let td = build_term(&t, &data).unwrap();
    let k1 = &td.k1;
    assert_eq!(k1.nrows(), 6);
    assert!((k1 - k1.transpose()).amax() < 1e-15);
    assert!(sym_eigenvalues(k1)[0] > -1e-12);
    // first column unpenalised, first-order random walk on the rest
    assert_eq!(k1.column(0).amax(), 0.0);
    assert_eq!(k1[(1, 1)], 1.0);
    assert_eq!(k1[(2, 2)], 2.0);
    assert_eq!(k1[(1, 2)], -1.0);
    assert_eq!(td.omega_grid, vec![1.0]);
    assert_eq!(td.rank_k, 4);

    // null space: constant log-increments give affine gamma and zero penalty
    let beta = [0.7, 0.2, 0.2, 0.2, 0.2, 0.2];
    let (g, _) = reparameterize(&beta, &td);
    for k in 2..6 {
        assert_abs_diff_eq!(g[k] - g[k - 1], g[1] - g[0], epsilon = 1e-12);
    }
    let b = DVector::from_column_slice(&beta);
    assert!((b.transpose() * k1 * &b)[(0, 0)].abs() < 1e-12);
}

#[test]
fn precision_examples() {
    let data = toy_data(40, 10);
    let t = TermSpec::new("s", spline(5), CovariateSpec::None).with_center(false);
    let td = build_term(&t, &data).unwrap();
    let k = build_precision(&td, 2.0, 1.0).unwrap();
    let expected = &td.k1 / 2.0 + DMatrix::<f64>::identity(5, 5) * PRECISION_RIDGE;
    assert!((k - expected).amax() < 1e-15);
    assert!(build_precision(&td, 0.0, 0.5).is_err());
    assert!(build_precision(&td, 1.0, 1.5).is_err());

    let tt = TermSpec::new("t", spline(5), CovariateSpec::Spline { column: "x2".into(), num_basis: 6, degree: 3 });
    let td = build_term(&tt, &data).unwrap();
    assert_eq!(td.omega_grid.len(), 19);
    let k0 = build_precision(&td, 0.5, 0.0).unwrap();
    let expected = DMatrix::<f64>::identity(5, 5).kronecker(&td.k2) / 0.5
        + DMatrix::<f64>::identity(30, 30) * PRECISION_RIDGE;
    assert!((&k0 - expected).amax() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let tau2 = rng.random_range(0.01..10.0);
        let omega = rng.random_range(0.0..1.0);
        let k = build_precision(&td, tau2, omega).unwrap();
        assert!((&k - k.transpose()).amax() < 1e-12);
        assert!(sym_eigenvalues(&k)[0] >= 9e-7);
        let b = DVector::from_iterator(30, (0..30).map(|_| rng.random_range(-3.0..3.0)));
        let q = (b.transpose() * &k * &b)[(0, 0)];
        assert!(q >= PRECISION_RIDGE * b.norm_squared() * (1.0 - 1e-9));
    }
}

#[test]
fn free_coordinates_reproduce_joint_basis() {
    let data = toy_data(60, 12);
    let specs = vec![
        TermSpec::new("a", spline(7), CovariateSpec::Spline { column: "x1".into(), num_basis: 6, degree: 3 }),
        TermSpec::new("b", spline(5), CovariateSpec::RandomEffect { column: "g".into() }).with_center(true),
        TermSpec::new("c", ResponseSpec::Linear, CovariateSpec::Linear(vec!["x1".into(), "x2".into()])),
        TermSpec::new("d", ResponseSpec::Intercept, CovariateSpec::Spline { column: "x3".into(), num_basis: 8, degree: 3 }),
        TermSpec::new("e", spline(6), CovariateSpec::Linear(vec!["x2".into(), "x3".into()])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for spec in specs {
        let td = build_term(&spec, &data).unwrap();
        let rows = td.covariate_rows(&data.covariates).unwrap();
        for _ in 0..10 {
            let free: Vec<f64> = (0..td.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mask = td.free_exp_mask();
            let tilde: Vec<f64> = free
                .iter()
                .zip(mask)
                .map(|(&b, &m)| if m { b.exp() } else { b })
                .collect();
            let full = td.full_from_free(&free);
            let (gamma, _) = reparameterize(&full, &td);
            let offset = td.centering_offset(&free);
            for i in [0usize, 17, 42] {
                let y = rng.random_range(-2.0..2.0);
                let b: Vec<f64> = rows.row(i).iter().copied().collect();
                let mut u = vec![0.0; td.dim()];
                let mut up = vec![0.0; td.dim()];
                td.fill_site(y, &b, &mut u, &mut up);
                let (c, cp) = td.joint_basis(y, &b);
                let h_free: f64 = u.iter().zip(&tilde).map(|(a, b)| a * b).sum();
                let h_full: f64 = c.iter().zip(&gamma).map(|(a, b)| a * b).sum::<f64>() - offset;
                let hp_free: f64 = up.iter().zip(&tilde).map(|(a, b)| a * b).sum();
                let hp_full: f64 = cp.iter().zip(&gamma).map(|(a, b)| a * b).sum();
                assert!((h_free - h_full).abs() < 1e-9 * (1.0 + h_full.abs()), "{}: {h_free} vs {h_full}", td.name);
                assert!((hp_free - hp_full).abs() < 1e-9 * (1.0 + hp_full.abs()), "{}", td.name);
            }
        }
    }
}

#[test]
fn centred_nonlinear_effects_average_to_zero() {
    let data = toy_data(80, 14);
    let spec = TermSpec::new("d", ResponseSpec::Intercept, CovariateSpec::Spline { column: "x3".into(), num_basis: 8, degree: 3 });
    let td = build_term(&spec, &data).unwrap();
    assert_eq!(td.dim(), 7);
    let rows = td.covariate_rows(&data.covariates).unwrap();
    let free: Vec<f64> = (0..7).map(|k| (k as f64 - 3.0) * 0.4).collect();
    let mut total = 0.0;
    for i in 0..80 {
        let b: Vec<f64> = rows.row(i).iter().copied().collect();
        let mut u = vec![0.0; 7];
        let mut up = vec![0.0; 7];
        td.fill_site(0.0, &b, &mut u, &mut up);
        total += u.iter().zip(&free).map(|(a, b)| a * b).sum::<f64>();
    }
    assert!(total.abs() < 1e-10);
}

#[test]
fn spatial_term_uses_graph_laplacian() {
    let n = 12;
    let regions: Vec<String> = (0..n).map(|i| ["a", "b", "c"][i % 3].to_string()).collect();
    let cov = Covariates::new(n).with_factor("r", regions).unwrap();
    let y: Vec<f64> = (0..n).map(|i| i as f64 / 3.0).collect();
    let data = DataSet::exact(y, cov).unwrap();
    let spec = TermSpec::new(
        "sp",
        ResponseSpec::Intercept,
        CovariateSpec::Spatial {
            column: "r".into(),
            edges: vec![("a".into(), "b".into()), ("b".into(), "c".into()), ("c".into(), "b".into())],
        },
    );
    let td = build_term(&spec, &data).unwrap();
    let expected = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
    assert_eq!(td.k2, expected);
    // centred: the constant is removed, leaving a full-rank penalty
    assert_eq!(td.dim(), 2);
    assert_eq!(td.rank_k, 2);
}

#[test]
fn omega_tables_match_direct_log_determinants() {
    let data = toy_data(40, 15);
    let tt = TermSpec::new("t", spline(5), CovariateSpec::Spline { column: "x2".into(), num_basis: 5, degree: 3 });
    let td = build_term(&tt, &data).unwrap();
    for (idx, &w) in td.omega_grid.iter().enumerate() {
        for tau2 in [0.1, 1.0, 7.0] {
            let k = td.precision(tau2, w);
            let direct = k.clone().cholesky().unwrap().l().diagonal().map(|d| d.ln()).sum() * 2.0;
            assert!((td.logdet(tau2, idx) - direct).abs() < 1e-8 * direct.abs().max(1.0));
        }
        assert!((td.logdet(1.0, idx) - td.logdet_table[idx]).abs() < 1e-12);
    }
}

/// Prior density of `gamma` from the change of variables `beta -> gamma`
/// with `beta ~ N(0, K^-1)`, `D = 3`, `D2 = 1`.
fn gamma_density(g: [f64; 3], k: &DMatrix<f64>) -> f64 {
    let d2 = g[1] - g[0];
    let d3 = g[2] - g[1];
    if d2 <= 0.0 || d3 <= 0.0 {
        return 0.0;
    }
    let beta = DVector::from_column_slice(&[g[0], d2.ln(), d3.ln()]);
    let q = (beta.transpose() * k * &beta)[(0, 0)];
    let det = k.determinant();
    let p_beta = (2.0 * std::f64::consts::PI).powf(-1.5) * det.sqrt() * (-0.5 * q).exp();
    p_beta / (d2 * d3)
}

#[test]
fn prior_change_of_variables_histogram() {
    let data = toy_data(30, 16);
    let t3 = TermSpec::new("s", ResponseSpec::Spline { num_basis: 3, degree: 2 }, CovariateSpec::None)
        .with_center(false);
    let td = build_term(&t3, &data).unwrap();
    // proper prior: K1 plus a unit ridge
    let k = &td.k1 + DMatrix::<f64>::identity(3, 3);
    let chol = k.clone().cholesky().unwrap();
    let linv = chol.l().try_inverse().unwrap();
    let cov_sqrt = linv.transpose(); // (L^-T) z ~ N(0, K^-1)

    let edges = [f64::NEG_INFINITY, -1.0, -0.3, 0.3, 1.0, f64::INFINITY];
    let bin = |v: f64| edges.windows(2).position(|w| v >= w[0] && v < w[1]).unwrap();
    let n = 100_000;
    let mut counts = vec![0usize; 125];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..n {
        let z = DVector::from_iterator(3, (0..3).map(|_| StandardNormal.sample(&mut rng)));
        let beta = &cov_sqrt * z;
        let (g, _) = reparameterize(beta.as_slice(), &td);
        let coords = [g[0], (g[1] - g[0]).ln(), (g[2] - g[1]).ln()];
        counts[bin(coords[0]) * 25 + bin(coords[1]) * 5 + bin(coords[2])] += 1;
    }
    // expected bin masses by midpoint quadrature of the gamma density, in
    // coordinates (g1, log d2, log d3) with quadrature Jacobian d2 * d3
    let m = 16;
    let lim = |e: f64| e.clamp(-7.0, 7.0);
    let mut chi2 = 0.0;
    let mut used = 0;
    for a in 0..5 {
        for b in 0..5 {
            for c in 0..5 {
                let ranges = [(lim(edges[a]), lim(edges[a + 1])), (lim(edges[b]), lim(edges[b + 1])), (lim(edges[c]), lim(edges[c + 1]))];
                let hs: Vec<f64> = ranges.iter().map(|r| (r.1 - r.0) / m as f64).collect();
                let mut mass = 0.0;
                for i in 0..m {
                    let g1 = ranges[0].0 + (i as f64 + 0.5) * hs[0];
                    for j in 0..m {
                        let l2 = ranges[1].0 + (j as f64 + 0.5) * hs[1];
                        for l in 0..m {
                            let l3 = ranges[2].0 + (l as f64 + 0.5) * hs[2];
                            let (d2, d3) = (l2.exp(), l3.exp());
                            let g = [g1, g1 + d2, g1 + d2 + d3];
                            mass += gamma_density(g, &k) * d2 * d3;
                        }
                    }
                }
                mass *= hs[0] * hs[1] * hs[2];
                let expected = mass * n as f64;
                if expected >= 5.0 {
                    let o = counts[a * 25 + b * 5 + c] as f64;
                    chi2 += (o - expected).powi(2) / expected;
                    used += 1;
                }
            }
        }
    }
    let crit = ChiSquared::new((used - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(chi2 < crit, "chi2 {chi2} over {used} bins exceeds {crit}");
}

#[test]
fn elicited_scale_is_self_consistent() {
    let data = toy_data(60, 18);
    let spec = TermSpec::new("s", spline(10), CovariateSpec::None).with_hyperprior(HyperpriorSpec::sd());
    let td = build_term(&spec, &data).unwrap();
    let theta = match td.hyperprior {
        Hyperprior::ScaleDependent { theta } => theta,
        other => panic!("unexpected hyperprior {other:?}"),
    };
    assert!(theta > 0.0 && theta.is_finite());
    let fresh = ElicitationSample::draw(&td, 20_000, 999);
    let p = fresh.probability(theta, 3.0);
    assert!((p - 0.99).abs() < 0.01, "re-simulated probability {p}");

    // probability falls as the scale grows
    let mut prev = 1.0;
    for k in -6..6 {
        let p = fresh.probability(10f64.powi(k), 3.0);
        assert!(p <= prev);
        prev = p;
    }
    // an unbounded criterion accepts every scale
    let huge = bctm::model::elicit_sd_scale(1e200, 0.01, &td, 1000, 1).unwrap();
    assert!(huge > 1e12);
}

#[test]
fn model_design_counts_and_names() {
    let data = toy_data(25, 19);
    let spec = ModelSpec::new(
        ReferenceDistribution::StandardNormal,
        vec![
            TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None),
            TermSpec::new("vc", ResponseSpec::Linear, CovariateSpec::Linear(vec!["x1".into(), "x2".into()])),
            TermSpec::new("int", ResponseSpec::Intercept, CovariateSpec::None),
        ],
    );
    let md = ModelDesign::build(&spec, &data).unwrap();
    // beta_0 + y slope + (2 shift + 2 varying)
    assert_eq!(md.dim(), 6);
    assert_eq!(md.terms.len(), 2);
    assert_eq!(md.coefficient_names()[1], "beta_y_0");
    assert_eq!(md.nsites(), 25);
    let beta0 = md.initial_beta();
    let (h, hp) = md.transform(&beta0, &md.sites);
    assert!(h.mean().abs() < 1e-10);
    assert!(hp.iter().all(|&v| v > 0.0));
}

mod spec_json {
    use super::*;
    use proptest::prelude::*;

    fn column() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,6}"
    }

    fn response() -> impl Strategy<Value = ResponseSpec> {
        prop_oneof![
            Just(ResponseSpec::Intercept),
            Just(ResponseSpec::Linear),
            (4usize..30, 1usize..4).prop_map(|(num_basis, degree)| ResponseSpec::Spline { num_basis, degree }),
        ]
    }

    fn covariate() -> impl Strategy<Value = CovariateSpec> {
        prop_oneof![
            Just(CovariateSpec::None),
            proptest::collection::vec(column(), 1..4).prop_map(CovariateSpec::Linear),
            (column(), 4usize..30, 1usize..4).prop_map(|(column, num_basis, degree)| CovariateSpec::Spline {
                column,
                num_basis,
                degree
            }),
            column().prop_map(|column| CovariateSpec::RandomEffect { column }),
            (column(), proptest::collection::vec((column(), column()), 0..4))
                .prop_map(|(column, edges)| CovariateSpec::Spatial { column, edges }),
        ]
    }

    fn hyperprior() -> impl Strategy<Value = HyperpriorSpec> {
        prop_oneof![
            (0.01f64..10.0, 1e-5f64..1.0).prop_map(|(a, b)| HyperpriorSpec::Ig { a, b }),
            (0.1f64..10.0, 0.001f64..0.5, proptest::option::of(0.01f64..5.0))
                .prop_map(|(c, alpha, theta)| HyperpriorSpec::Sd { c, alpha, theta }),
        ]
    }

    fn term() -> impl Strategy<Value = TermSpec> {
        (column(), response(), covariate(), hyperprior(), proptest::option::of(any::<bool>())).prop_map(
            |(name, r, c, h, center)| {
                let mut t = TermSpec::new(name, r, c).with_hyperprior(h);
                t.center = center;
                t
            },
        )
    }

    proptest! {
        #[test]
        fn model_json_round_trips(
            terms in proptest::collection::vec(term(), 1..6),
            reference in prop_oneof![
                Just(ReferenceDistribution::StandardNormal),
                Just(ReferenceDistribution::StandardLogistic),
                Just(ReferenceDistribution::MinimumExtremeValue),
            ],
            seed in any::<u64>(),
        ) {
            let mut spec = ModelSpec::new(reference, terms);
            spec.seed = seed;
            let back: ModelSpec = serde_json::from_str(&spec.to_json()).unwrap();
            prop_assert_eq!(back, spec);
        }
    }
}
