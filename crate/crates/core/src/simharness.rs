//! Synthetic data generators with known truth and replicated experiments.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Covariates, DataSet};
use crate::error::{BctmError, Result};
use crate::inference::{posterior_cdf, waic, PredictiveCdf};
use crate::model::{CovariateSpec, ModelSpec, ResponseSpec, TermSpec};
use crate::reference::ReferenceDistribution;
use crate::sampler::{chain_seed, fit, Fit, SamplerConfig};
use crate::scoring::{coverage, crps, mad, quantile_bias, quantile_score, DEFAULT_CRPS_LEVELS};

const NORMAL: ReferenceDistribution = ReferenceDistribution::StandardNormal;

/// Quantile levels at which the quantile bias is reported.
pub const BIAS_LEVELS: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95];
/// Points of the tabulated predictive cdf used for quantile inversion.
const PREDICTIVE_POINTS: usize = 512;

/// Conditional distribution of the varying-coefficient scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VcmTruth {
    /// Number of noise covariates.
    pub p: usize,
}

impl VcmTruth {
    pub fn cdf(&self, y: f64, x1: f64, x2: f64) -> f64 {
        NORMAL.cdf(y * (x1 + 0.5) - x2)
    }

    pub fn density(&self, y: f64, x1: f64, x2: f64) -> f64 {
        NORMAL.log_pdf(y * (x1 + 0.5) - x2).exp() * (x1 + 0.5)
    }

    pub fn quantile(&self, alpha: f64, x1: f64, x2: f64) -> f64 {
        (x2 + NORMAL.quantile(alpha)) / (x1 + 0.5)
    }

    pub fn mean(&self, x1: f64, x2: f64) -> f64 {
        x2 / (x1 + 0.5)
    }

    pub fn sd(&self, x1: f64) -> f64 {
        1.0 / (x1 + 0.5)
    }

    pub fn sample<R: Rng + ?Sized>(&self, x1: f64, x2: f64, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        (x2 + e) / (x1 + 0.5)
    }
}

/// Name of the `k`-th covariate (1-based) of the simulated data.
pub fn covariate_name(k: usize) -> String {
    format!("x{k}")
}

/// `n` draws of the varying-coefficient scenario with `p` noise covariates.
pub fn gen_vcm<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<(DataSet, VcmTruth)> {
    if n == 0 {
        return Err(BctmError::InvalidParameter("n must be at least 1".into()));
    }
    let truth = VcmTruth { p };
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let noise: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n).map(|i| truth.sample(x1[i], x2[i], rng)).collect();
    let mut cov = Covariates::new(n).with_real("x1", x1)?.with_real("x2", x2)?;
    for (k, col) in noise.into_iter().enumerate() {
        cov = cov.with_real(covariate_name(k + 3), col)?;
    }
    Ok((DataSet::exact(y, cov)?, truth))
}

/// The four additive effects of the nonlinear scenario.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Additive4Truth;

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl Additive4Truth {
    /// Effect `k` (1-based) at `x`.
    pub fn f(&self, k: usize, x: f64) -> f64 {
        use std::f64::consts::PI;
        match k {
            1 => x,
            2 => x + (2.0 * x - 2.0).powi(2) / 5.5,
            3 => -x + PI * (PI * x).sin(),
            4 => 0.5 * x + 15.0 * std_normal_pdf(2.0 * (x - 0.2)) - std_normal_pdf(x + 0.4),
            _ => panic!("effect index {k} outside 1..=4"),
        }
    }

    /// Effect `k` on `grid`, centred to mean zero over the grid.
    pub fn centered(&self, k: usize, grid: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = grid.iter().map(|&x| self.f(k, x)).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|a| a - m).collect()
    }

    pub fn predictor(&self, x: [f64; 4]) -> f64 {
        (1..=4).map(|k| self.f(k, x[k - 1])).sum()
    }
}

/// `n` draws of `y = f1(x1) + ... + f4(x4) + eps` with `x_k ~ U[-2, 2]`.
pub fn gen_additive4<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(DataSet, Additive4Truth)> {
    if n == 0 {
        return Err(BctmError::InvalidParameter("n must be at least 1".into()));
    }
    let truth = Additive4Truth;
    let xs: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(rng);
            truth.predictor([xs[0][i], xs[1][i], xs[2][i], xs[3][i]]) + e
        })
        .collect();
    let mut cov = Covariates::new(n);
    for (k, col) in xs.into_iter().enumerate() {
        cov = cov.with_real(covariate_name(k + 1), col)?;
    }
    Ok((DataSet::exact(y, cov)?, truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Scenario {
    Vcm { p: usize },
    Additive4,
}

impl Scenario {
    /// Fast schedule; the additive scenario raises the acceptance target
    /// because its collapsing smoothing variances make the geometry stiff
    /// enough to diverge at the usual step size.
    pub fn default_sampler(&self) -> SamplerConfig {
        match self {
            Scenario::Vcm { .. } => SamplerConfig::fast(),
            Scenario::Additive4 => SamplerConfig {
                target_accept: 0.95,
                ..SamplerConfig::fast()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// `(1, y) x (1, x)` joint basis.
    LinBctm,
    /// Linear in `y`, covariates shift only.
    ShiftBctm,
    /// Spline-by-spline tensors for every covariate.
    FullBctm,
    /// Linear in `y` plus a nonlinear shift spline per covariate.
    Additive4,
}

impl Template {
    pub fn name(&self) -> &'static str {
        match self {
            Template::LinBctm => "lin_bctm",
            Template::ShiftBctm => "shift_bctm",
            Template::FullBctm => "full_bctm",
            Template::Additive4 => "additive4",
        }
    }

    pub fn spec(&self, scenario: Scenario) -> Result<ModelSpec> {
        match (self, scenario) {
            (Template::LinBctm, Scenario::Vcm { p }) => Ok(lin_bctm(p)),
            (Template::ShiftBctm, Scenario::Vcm { p }) => Ok(shift_bctm(p)),
            (Template::FullBctm, Scenario::Vcm { p }) => Ok(full_bctm(p)),
            (Template::Additive4, Scenario::Additive4) => Ok(additive4_model()),
            _ => Err(BctmError::InvalidModel(format!(
                "template {} does not apply to scenario {scenario:?}",
                self.name()
            ))),
        }
    }
}

fn vcm_columns(p: usize) -> Vec<String> {
    (1..=p + 2).map(covariate_name).collect()
}

pub fn lin_bctm(p: usize) -> ModelSpec {
    ModelSpec::new(
        NORMAL,
        vec![
            TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None),
            TermSpec::new("vc", ResponseSpec::Linear, CovariateSpec::Linear(vcm_columns(p))),
        ],
    )
}

pub fn shift_bctm(p: usize) -> ModelSpec {
    ModelSpec::new(
        NORMAL,
        vec![
            TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None),
            TermSpec::new("shift", ResponseSpec::Intercept, CovariateSpec::Linear(vcm_columns(p))),
        ],
    )
}

pub fn full_bctm(p: usize) -> ModelSpec {
    let terms = vcm_columns(p)
        .into_iter()
        .map(|c| {
            TermSpec::new(
                format!("te_{c}"),
                ResponseSpec::Spline { num_basis: 10, degree: 3 },
                CovariateSpec::Spline {
                    column: c,
                    num_basis: 10,
                    degree: 3,
                },
            )
        })
        .collect();
    ModelSpec::new(NORMAL, terms)
}

pub fn additive4_model() -> ModelSpec {
    let mut terms = vec![TermSpec::new("y", ResponseSpec::Linear, CovariateSpec::None)];
    for k in 1..=4 {
        let c = covariate_name(k);
        terms.push(TermSpec::new(
            format!("f_{c}"),
            ResponseSpec::Intercept,
            CovariateSpec::Spline {
                column: c,
                num_basis: 20,
                degree: 3,
            },
        ));
    }
    ModelSpec::new(NORMAL, terms)
}

/// Evaluation grid of the varying-coefficient scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VcmGrid {
    pub y: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl Default for VcmGrid {
    fn default() -> Self {
        Self::new(25, 10, 10, (-4.0, 4.0))
    }
}

fn midpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * (k as f64 + 0.5) / n as f64).collect()
}

impl VcmGrid {
    /// `ny` equispaced responses on `y_range` (end points included) crossed
    /// with cell midpoints of `x1 in [0, 1]` and `x2 in [-2, 2]`.
    pub fn new(ny: usize, nx1: usize, nx2: usize, y_range: (f64, f64)) -> Self {
        let y = (0..ny)
            .map(|k| y_range.0 + (y_range.1 - y_range.0) * k as f64 / (ny.max(2) - 1) as f64)
            .collect();
        Self {
            y,
            x1: midpoints(0.0, 1.0, nx1),
            x2: midpoints(-2.0, 2.0, nx2),
        }
    }

    /// Covariate rows `(x1, x2)` in row-major order; noise covariates sit at
    /// the centre of their range.
    pub fn covariates(&self, p: usize) -> Result<Covariates> {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for &u in &self.x1 {
            for &v in &self.x2 {
                a.push(u);
                b.push(v);
            }
        }
        let n = a.len();
        let mut cov = Covariates::new(n).with_real("x1", a)?.with_real("x2", b)?;
        for k in 0..p {
            cov = cov.with_real(covariate_name(k + 3), vec![0.5; n])?;
        }
        Ok(cov)
    }
}

/// Scores of one fit on the varying-coefficient grid. A test response is drawn
/// from the truth at every grid covariate row for the quantile score and CRPS.
pub fn evaluate_vcm<R: Rng + ?Sized>(
    fit: &Fit,
    truth: &VcmTruth,
    grid: &VcmGrid,
    rng: &mut R,
) -> Result<Vec<(String, f64)>> {
    let cov = grid.covariates(truth.p)?;
    let rows = fit.design.covariate_rows(&cov)?;
    let x1 = cov.real("x1")?;
    let x2 = cov.real("x2")?;
    let mut true_cdf = Vec::new();
    let mut est_cdf = Vec::new();
    let mut qs05 = Vec::new();
    let mut qs95 = Vec::new();
    let mut crps_v = Vec::new();
    let mut bias_est: Vec<Vec<f64>> = vec![Vec::new(); BIAS_LEVELS.len()];
    let mut bias_true: Vec<Vec<f64>> = vec![Vec::new(); BIAS_LEVELS.len()];
    for i in 0..cov.nrows() {
        let est = posterior_cdf(&fit.draws, &fit.design, &cov, i, &grid.y)?;
        for (k, &y) in grid.y.iter().enumerate() {
            true_cdf.push(truth.cdf(y, x1[i], x2[i]));
            est_cdf.push(est.cdf_mean[k]);
        }
        let pred = PredictiveCdf::new(&fit.draws, &fit.design, &rows, i, PREDICTIVE_POINTS)?;
        let y_test = truth.sample(x1[i], x2[i], rng);
        qs05.push(quantile_score(pred.quantile(0.05), y_test, 0.05));
        qs95.push(quantile_score(pred.quantile(0.95), y_test, 0.95));
        crps_v.push(crps(|a| pred.quantile(a), y_test, DEFAULT_CRPS_LEVELS)?);
        for (l, &a) in BIAS_LEVELS.iter().enumerate() {
            bias_est[l].push(pred.quantile(a));
            bias_true[l].push(truth.quantile(a, x1[i], x2[i]));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut out = vec![
        ("mad".to_string(), mad(&true_cdf, &est_cdf)?),
        ("qs_0.05".to_string(), mean(&qs05)),
        ("qs_0.95".to_string(), mean(&qs95)),
        ("crps".to_string(), mean(&crps_v)),
    ];
    for (l, &a) in BIAS_LEVELS.iter().enumerate() {
        out.push((format!("quantile_bias_{a}"), quantile_bias(&bias_est[l], &bias_true[l])?));
    }
    Ok(out)
}

/// Grid on which the additive effects are compared.
pub fn effect_grid(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| -2.0 + 4.0 * k as f64 / (points.max(2) - 1) as f64)
        .collect()
}

/// Posterior draws of the additive effect of covariate `k` (1-based) on
/// `grid`, on the response scale and centred over the grid. With `h = b0 +
/// b_y y + sum_k g_k(x_k)`, the effect on `y` is `-g_k / b_y`.
pub fn additive_effect_draws(fit: &Fit, k: usize, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = grid.len();
    let mut cov = Covariates::new(n);
    for j in 1..=4 {
        let v = if j == k { grid.to_vec() } else { vec![0.0; n] };
        cov = cov.with_real(covariate_name(j), v)?;
    }
    let rows = fit.design.covariate_rows(&cov)?;
    let idx: Vec<usize> = (0..n).collect();
    let sites = fit.design.site_matrix(&rows, &idx, &vec![0.0; n]);
    let mut out = Vec::with_capacity(fit.draws.len());
    for beta in &fit.draws.beta {
        let (h, hp) = fit.design.transform(beta, &sites);
        let slope = hp[0];
        let m = h.mean();
        out.push(h.iter().map(|&v| -(v - m) / slope).collect());
    }
    Ok(out)
}

/// Pointwise coverage of the central `level` credible band of each effect.
pub fn evaluate_additive4(fit: &Fit, truth: &Additive4Truth, grid: &[f64], level: f64) -> Result<Vec<(String, f64)>> {
    let tail = 0.5 * (1.0 - level);
    let mut out = Vec::new();
    let mut total = 0.0;
    for k in 1..=4 {
        let draws = additive_effect_draws(fit, k, grid)?;
        let mut lower = Vec::with_capacity(grid.len());
        let mut upper = Vec::with_capacity(grid.len());
        for g in 0..grid.len() {
            let mut col: Vec<f64> = draws.iter().map(|d| d[g]).collect();
            col.sort_by(f64::total_cmp);
            lower.push(crate::linalg::quantile_sorted(&col, tail));
            upper.push(crate::linalg::quantile_sorted(&col, 1.0 - tail));
        }
        let c = coverage(&truth.centered(k, grid), &lower, &upper)?;
        total += c;
        out.push((format!("coverage_f{k}"), c));
    }
    out.push(("coverage_mean".to_string(), total / 4.0));
    Ok(out)
}

fn default_templates() -> Vec<Template> {
    vec![Template::LinBctm]
}

fn default_effect_points() -> usize {
    50
}

fn default_level() -> f64 {
    0.95
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_templates")]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub seed: u64,
    /// `None` uses [`Scenario::default_sampler`].
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub grid: VcmGrid,
    /// Points of the effect grid of the additive scenario.
    #[serde(default = "default_effect_points")]
    pub effect_points: usize,
    /// Nominal level of the coverage check.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, n: usize, replications: usize, templates: Vec<Template>) -> Self {
        Self {
            scenario,
            n,
            replications,
            templates,
            seed: 0,
            sampler: None,
            grid: VcmGrid::default(),
            effect_points: default_effect_points(),
            level: default_level(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Scenario::Vcm { p } = self.scenario {
            if p > 5 {
                return Err(BctmError::InvalidParameter(format!("noise covariates p must lie in 0..=5, got {p}")));
            }
        }
        if self.replications == 0 {
            return Err(BctmError::InvalidParameter("replications must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(BctmError::InvalidParameter("n must be at least 1".into()));
        }
        if self.templates.is_empty() {
            return Err(BctmError::InvalidParameter("no model templates given".into()));
        }
        for t in &self.templates {
            t.spec(self.scenario)?;
        }
        self.sampler_config().validate()
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        self.sampler.clone().unwrap_or_else(|| self.scenario.default_sampler())
    }

    /// Seed of replication `r`.
    pub fn replication_seed(&self, r: usize) -> u64 {
        chain_seed(self.seed, r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub replication: usize,
    pub model: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub model: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub replication: usize,
    pub model: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub replication_seeds: Vec<u64>,
    pub failures: Vec<Failure>,
    pub timings: Vec<Timing>,
    pub files: Vec<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub scores: Vec<ScoreRow>,
    pub manifest: ExperimentManifest,
}

impl ExperimentResult {
    /// Values of `metric` for `model`, in replication order.
    pub fn values(&self, model: &str, metric: &str) -> Vec<(usize, f64)> {
        self.scores
            .iter()
            .filter(|r| r.model == model && r.metric == metric)
            .map(|r| (r.replication, r.value))
            .collect()
    }
}

type RepOutput = (Vec<ScoreRow>, Vec<Failure>, Vec<Timing>);

fn run_replication(cfg: &ExperimentConfig, r: usize) -> RepOutput {
    let seed = cfg.replication_seed(r);
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let generated = match cfg.scenario {
        Scenario::Vcm { p } => gen_vcm(cfg.n, p, &mut data_rng).map(|(d, t)| (d, Some(t))),
        Scenario::Additive4 => gen_additive4(cfg.n, &mut data_rng).map(|(d, _)| (d, None)),
    };
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    let mut timings = Vec::new();
    let (data, vcm_truth) = match generated {
        Ok(v) => v,
        Err(e) => {
            failures.push(Failure {
                replication: r,
                model: String::new(),
                error: e.to_string(),
            });
            return (scores, failures, timings);
        }
    };
    for (t_idx, template) in cfg.templates.iter().enumerate() {
        let start = Instant::now();
        let model = template.name().to_string();
        let outcome = (|| -> Result<Vec<(String, f64)>> {
            let mut spec = template.spec(cfg.scenario)?;
            spec.seed = seed;
            let sampler = cfg.sampler_config().with_seed(seed.wrapping_add(t_idx as u64 + 1));
            let f = fit(&spec, &data, &sampler)?;
            let mut metrics = match &vcm_truth {
                Some(truth) => {
                    // same test responses for every template
                    let mut test_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5DEE_CE66_D1CE_4E5B);
                    evaluate_vcm(&f, truth, &cfg.grid, &mut test_rng)?
                }
                None => evaluate_additive4(&f, &Additive4Truth, &effect_grid(cfg.effect_points), cfg.level)?,
            };
            let score = waic(&f.draws, &f.design)?;
            let summary = f.draws.summary();
            metrics.extend([
                ("waic".to_string(), score.waic),
                ("p_waic".to_string(), score.p_waic),
                ("dic".to_string(), score.dic),
                ("lppd".to_string(), score.lppd),
                ("divergences".to_string(), summary.divergences as f64),
            ]);
            Ok(metrics)
        })();
        timings.push(Timing {
            replication: r,
            model: model.clone(),
            seconds: start.elapsed().as_secs_f64(),
        });
        match outcome {
            Ok(metrics) => scores.extend(metrics.into_iter().map(|(metric, value)| ScoreRow {
                replication: r,
                model: model.clone(),
                metric,
                value,
            })),
            Err(e) => {
                log::warn!("replication {r}, model {model} failed: {e}");
                failures.push(Failure {
                    replication: r,
                    model,
                    error: e.to_string(),
                });
            }
        }
    }
    (scores, failures, timings)
}

/// Runs every replication and template. Failed fits are recorded in the
/// manifest and skipped. With `out_dir`, `scores.csv` and `manifest.json` are
/// written there.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_rep: Vec<RepOutput> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect();
    let mut scores = Vec::new();
    let mut failures = Vec::new();
    let mut timings = Vec::new();
    for (s, f, t) in per_rep {
        scores.extend(s);
        failures.extend(f);
        timings.extend(t);
    }
    let mut manifest = ExperimentManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        replication_seeds: (0..cfg.replications).map(|r| cfg.replication_seed(r)).collect(),
        failures,
        timings,
        files: Vec::new(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| BctmError::InvalidData(format!("{}: {e}", dir.display())))?;
        let scores_path = dir.join("scores.csv");
        write_scores(&scores, &scores_path)?;
        let manifest_path = dir.join("manifest.json");
        manifest.files = vec![scores_path, manifest_path.clone()];
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| BctmError::InvalidData(e.to_string()))?;
        std::fs::write(&manifest_path, text)
            .map_err(|e| BctmError::InvalidData(format!("{}: {e}", manifest_path.display())))?;
    }
    Ok(ExperimentResult { scores, manifest })
}

/// Writes score rows as CSV with columns `replication,model,metric,value`.
pub fn write_scores(rows: &[ScoreRow], path: &Path) -> Result<()> {
    let io = |e: csv::Error| BctmError::InvalidData(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| BctmError::InvalidData(format!("{}: {e}", path.display())))?;
    Ok(())
}
