use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bctm::data::Response;
use bctm::inference::{log_score, posterior_cdf_level, posterior_quantile, waic, PredictiveCdf};
use bctm::linalg::quantile_sorted;
use bctm::model::{CovariateSpec, ModelSpec};
use bctm::sampler::{fit as fit_model, DiagnosticsSummary, Fit, PosteriorDraws};
use bctm::scoring::{crps, DEFAULT_CRPS_LEVELS};
use bctm::simharness::{run_experiment, ExperimentConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::io::{read_edges, write_csv, Table};
use crate::{FitArgs, PredictArgs, ScoreArgs, SimulateArgs};

pub const MODEL_FILE: &str = "model.json";
pub const DATA_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";

/// Points of the response grid behind held-out CRPS.
const CRPS_GRID_POINTS: usize = 400;

pub fn draws_file(chain: usize) -> String {
    format!("draws_chain{chain}.csv")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// SHA-256 of the resolved model JSON followed by the input data.
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<DiagnosticsSummary>,
    /// Files written next to the manifest.
    pub files: Vec<String>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(CliError::io(path))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(CliError::io(path))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn config_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    format!("{:x}", h.finalize())
}

/// Parses a model document, fills in term names and spatial edges, and
/// validates the result.
pub fn parse_model(text: &str, source: &Path, edges: Option<&[(String, String)]>) -> Result<ModelSpec> {
    let mut spec: ModelSpec = serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("{}: malformed model: {e}", source.display())))?;
    spec.fill_names();
    if let Some(edges) = edges {
        for t in spec.terms.iter_mut() {
            if let CovariateSpec::Spatial { edges: e, .. } = &mut t.covariate {
                if e.is_empty() {
                    *e = edges.to_vec();
                }
            }
        }
    }
    spec.validate()?;
    Ok(spec)
}

pub fn fit(args: &FitArgs, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let edges = args.edges.as_deref().map(read_edges).transpose()?;
    let text = read_text(&args.model)?;
    let mut spec = parse_model(&text, &args.model, edges.as_deref())?;
    spec.sampler = args.sampler.apply(&spec.sampler);
    if let Some(seed) = args.sampler.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let table = Table::read(&args.data)?;
    let data = table.dataset(&spec)?;

    let fitted = fit_model(&spec, &data, &spec.sampler)?;

    create_dir(&args.out)?;
    let resolved = spec.to_json();
    fs::write(args.out.join(MODEL_FILE), &resolved).map_err(CliError::io(args.out.join(MODEL_FILE)))?;
    let raw = fs::read(&args.data).map_err(CliError::io(&args.data))?;
    fs::write(args.out.join(DATA_FILE), &raw).map_err(CliError::io(args.out.join(DATA_FILE)))?;
    let mut files = vec![MODEL_FILE.to_string(), DATA_FILE.to_string()];
    for c in 0..spec.sampler.chains {
        let name = draws_file(c);
        let path = args.out.join(&name);
        let f = fs::File::create(&path).map_err(CliError::io(&path))?;
        fitted.draws.write_csv(c, std::io::BufWriter::new(f))?;
        files.push(name);
    }
    let summary = fitted.draws.summary();
    #[derive(Serialize)]
    struct Diagnostics<'a> {
        summary: &'a DiagnosticsSummary,
        chains: &'a [bctm::sampler::ChainDiagnostics],
    }
    write_json(
        &args.out.join(DIAGNOSTICS_FILE),
        &Diagnostics {
            summary: &summary,
            chains: &fitted.draws.chains,
        },
    )?;
    files.push(DIAGNOSTICS_FILE.to_string());
    files.push(MANIFEST_FILE.to_string());
    log::info!(
        "{} draws, {} divergences, min ESS {:.0}",
        summary.draws,
        summary.divergences,
        summary.min_ess
    );
    RunManifest {
        command: argv.join(" "),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&[resolved.as_bytes(), &raw]),
        seed: spec.sampler.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        summary: Some(summary),
        files,
    }
    .write(&args.out)
}

/// Rebuilds the design and reads the draws of a fit directory.
pub fn load_fit(dir: &Path) -> Result<(ModelSpec, Fit)> {
    let model_path = dir.join(MODEL_FILE);
    let spec = parse_model(&read_text(&model_path)?, &model_path, None)?;
    let table = Table::read(&dir.join(DATA_FILE))?;
    let data = table.dataset(&spec)?;
    let design = bctm::model::ModelDesign::build(&spec, &data)?;
    let mut readers = Vec::new();
    for c in 0..spec.sampler.chains {
        let path = dir.join(draws_file(c));
        readers.push(fs::File::open(&path).map_err(CliError::io(path))?);
    }
    let draws = PosteriorDraws::read_csv(&design, readers)?;
    Ok((spec, Fit { design, draws }))
}

/// `lo:hi:n` or a comma-separated list of values.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Input(format!("invalid cdf grid `{s}`; use lo:hi:n or a comma-separated list"));
    let parts: Vec<&str> = s.split(':').collect();
    let grid: Vec<f64> = if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n < 2 || !(lo < hi) {
            return Err(bad());
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    } else {
        s.split(',').map(|v| v.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?
    };
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn predict(args: &PredictArgs, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Input(format!("--level must lie in (0, 1), got {}", args.level)));
    }
    if let Some(a) = args.quantiles.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::Input(format!("quantile levels must lie in (0, 1), got {a}")));
    }
    let grid = args.cdf_grid.as_deref().map(parse_grid).transpose()?;
    let quantiles = if args.quantiles.is_empty() && grid.is_none() {
        vec![0.1, 0.5, 0.9]
    } else {
        args.quantiles.clone()
    };
    let (spec, fitted) = load_fit(&args.fit)?;
    let table = Table::read(&args.data)?;
    let x = table.covariates(&spec)?;
    create_dir(&args.out)?;
    let mut files = Vec::new();
    let tail = 0.5 * (1.0 - args.level);

    if !quantiles.is_empty() {
        let mut rows = Vec::new();
        for i in 0..x.nrows() {
            for &alpha in &quantiles {
                let q = posterior_quantile(&fitted.draws, &fitted.design, &x, i, alpha)?;
                let mut sorted = q.draws.clone();
                sorted.sort_by(f64::total_cmp);
                rows.push(vec![
                    i.to_string(),
                    alpha.to_string(),
                    q.mean.to_string(),
                    quantile_sorted(&sorted, tail).to_string(),
                    quantile_sorted(&sorted, 1.0 - tail).to_string(),
                ]);
            }
        }
        write_csv(&args.out.join("quantiles.csv"), &["row", "alpha", "mean", "lower", "upper"], rows)?;
        files.push("quantiles.csv".to_string());
    }
    if let Some(grid) = &grid {
        let mut rows = Vec::new();
        for i in 0..x.nrows() {
            let est = posterior_cdf_level(&fitted.draws, &fitted.design, &x, i, grid, args.level)?;
            for k in 0..grid.len() {
                rows.push(vec![
                    i.to_string(),
                    grid[k].to_string(),
                    est.cdf_mean[k].to_string(),
                    est.cdf_lower[k].to_string(),
                    est.cdf_upper[k].to_string(),
                    est.density_mean[k].to_string(),
                ]);
            }
        }
        write_csv(
            &args.out.join("cdf.csv"),
            &["row", "y", "cdf_mean", "cdf_lower", "cdf_upper", "density_mean"],
            rows,
        )?;
        files.push("cdf.csv".to_string());
    }
    files.push(MANIFEST_FILE.to_string());
    let model_text = read_text(&args.fit.join(MODEL_FILE))?;
    let raw = fs::read(&args.data).map_err(CliError::io(&args.data))?;
    RunManifest {
        command: argv.join(" "),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&[model_text.as_bytes(), &raw]),
        seed: spec.sampler.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        summary: None,
        files,
    }
    .write(&args.out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HeldOut {
    pub rows: usize,
    pub log_score: f64,
    /// Mean CRPS over the exactly observed rows.
    pub crps_mean: Option<f64>,
    pub crps_rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Scores {
    pub waic: f64,
    pub p_waic: f64,
    pub dic: f64,
    pub p_dic: f64,
    pub lppd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_out: Option<HeldOut>,
}

pub fn score(args: &ScoreArgs) -> Result<()> {
    let (spec, fitted) = load_fit(&args.fit)?;
    let s = waic(&fitted.draws, &fitted.design)?;
    let held_out = match &args.data {
        None => None,
        Some(path) => {
            let table = Table::read(path)?;
            let data = table.dataset(&spec)?;
            let ls = log_score(&fitted.draws, &fitted.design, &data)?;
            let rows = fitted.design.covariate_rows(&data.covariates)?;
            let mut total = 0.0;
            let mut count = 0;
            for (i, r) in data.responses.iter().enumerate() {
                if let Response::Exact(y) = *r {
                    let pc = PredictiveCdf::new(&fitted.draws, &fitted.design, &rows, i, CRPS_GRID_POINTS)?;
                    total += crps(|a| pc.quantile(a), y, DEFAULT_CRPS_LEVELS)?;
                    count += 1;
                }
            }
            Some(HeldOut {
                rows: data.len(),
                log_score: ls,
                crps_mean: (count > 0).then(|| total / count as f64),
                crps_rows: count,
            })
        }
    };
    let scores = Scores {
        waic: s.waic,
        p_waic: s.p_waic,
        dic: s.dic,
        p_dic: s.p_dic,
        lppd: s.lppd,
        held_out,
    };
    let text = serde_json::to_string_pretty(&scores).expect("scores serialize");
    println!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, text).map_err(CliError::io(out))?;
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read_text(&args.config)?)
        .map_err(|e| CliError::Input(format!("{}: malformed experiment: {e}", args.config.display())))?;
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(seed) = args.sampler.seed {
        cfg.seed = seed;
    }
    cfg.sampler = Some(args.sampler.apply(&cfg.sampler_config()));
    cfg.validate()?;
    let out: PathBuf = args.out.clone();
    let res = run_experiment(&cfg, Some(&out))?;
    for f in &res.manifest.failures {
        eprintln!("replication {} ({}) failed: {}", f.replication, f.model, f.error);
    }
    let mut keys: Vec<(&str, &str)> = res.scores.iter().map(|r| (r.model.as_str(), r.metric.as_str())).collect();
    keys.sort();
    keys.dedup();
    for (model, metric) in keys {
        let v: Vec<f64> = res.values(model, metric).into_iter().map(|(_, v)| v).collect();
        println!("{model}\t{metric}\t{}", v.iter().sum::<f64>() / v.len() as f64);
    }
    Ok(())
}
