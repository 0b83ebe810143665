//! The alternating sampler: NUTS for the coefficients, then the smoothing
//! variances, then the anisotropy weights.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapt::AdaptiveNuts;
use super::config::SamplerConfig;
use super::diagnostics::{effective_sample_size, ChainDiagnostics};
use super::gibbs::{gibbs_omega, gibbs_tau2_ig, mh_tau2_sd, ProposalScale};
use super::nuts::{LogDensity, TransitionStats};
use crate::data::DataSet;
use crate::error::{BctmError, Result};
use crate::likelihood::{log_likelihood, log_posterior_beta, ParameterState};
use crate::model::{Hyperprior, ModelDesign, ModelSpec};

/// Target acceptance of the `tau^2` random walk.
const MH_TARGET_ACCEPT: f64 = 0.44;

/// `p(beta | tau^2, omega, y)` as a [`LogDensity`].
pub struct BetaTarget<'a> {
    pub design: &'a ModelDesign,
    pub tau2: &'a [f64],
    pub omega: &'a [f64],
}

impl LogDensity for BetaTarget<'_> {
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (lp, g, _) = log_posterior_beta(self.design, x, self.tau2, self.omega);
        grad.copy_from_slice(&g);
        lp
    }
}

/// One coefficient update: a single NUTS transition from `state.beta` with
/// `tau^2` and `omega` held fixed.
pub fn nuts_update<R: rand::Rng + ?Sized>(
    nuts: &mut AdaptiveNuts,
    design: &ModelDesign,
    state: &mut ParameterState,
    rng: &mut R,
) -> TransitionStats {
    let target = BetaTarget {
        design,
        tau2: &state.tau2,
        omega: &state.omega,
    };
    let mut grad = vec![0.0; design.dim()];
    let logp = target.logp_grad(&state.beta, &mut grad);
    let (q, _, _, stats) = nuts.step(&target, &state.beta, logp, &grad, rng);
    if stats.divergent {
        log::debug!("divergent transition (step size {:.3e})", stats.step_size);
    }
    state.beta = q;
    stats
}

/// Retained draws of all chains, stacked chain after chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub coefficient_names: Vec<String>,
    pub term_names: Vec<String>,
    pub beta: Vec<Vec<f64>>,
    pub tau2: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    /// Chain index of every draw.
    pub chain: Vec<usize>,
    pub chains: Vec<ChainDiagnostics>,
    /// Effective sample size of every coefficient, summed over chains.
    pub ess: Vec<f64>,
    pub iterations: usize,
    pub warmup: usize,
    pub burn_in: usize,
}

/// Compact summary written next to the draws.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub chains: usize,
    pub draws: usize,
    pub divergences: usize,
    pub divergence_fraction: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub final_step_sizes: Vec<f64>,
    pub min_ess: f64,
    pub ess: Vec<(String, f64)>,
    pub seeds: Vec<u64>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.coefficient_names.len()
    }

    /// Posterior mean of the unconstrained coefficients.
    pub fn mean_beta(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(BctmError::EmptyDraws);
        }
        let mut m = vec![0.0; self.dim()];
        for b in &self.beta {
            for (a, v) in m.iter_mut().zip(b) {
                *a += v;
            }
        }
        let s = self.len() as f64;
        Ok(m.into_iter().map(|v| v / s).collect())
    }

    /// Post-warmup transitions per chain.
    pub fn post_warmup(&self) -> usize {
        self.iterations - self.warmup
    }

    pub fn summary(&self) -> DiagnosticsSummary {
        let divergences: usize = self.chains.iter().map(|c| c.divergences).sum();
        let total = self.post_warmup() * self.chains.len();
        let accepts: Vec<f64> = self.chains.iter().flat_map(|c| c.accept_stats.iter().copied()).collect();
        let depths: Vec<f64> = self
            .chains
            .iter()
            .flat_map(|c| c.tree_depths.iter().map(|&d| d as f64))
            .collect();
        DiagnosticsSummary {
            chains: self.chains.len(),
            draws: self.len(),
            divergences,
            divergence_fraction: if total > 0 { divergences as f64 / total as f64 } else { 0.0 },
            mean_accept_stat: crate::linalg::mean(&accepts),
            mean_tree_depth: crate::linalg::mean(&depths),
            final_step_sizes: self
                .chains
                .iter()
                .map(|c| c.step_sizes.last().copied().unwrap_or(f64::NAN))
                .collect(),
            min_ess: self.ess.iter().copied().fold(f64::INFINITY, f64::min),
            ess: self.coefficient_names.iter().cloned().zip(self.ess.iter().copied()).collect(),
            seeds: self.chains.iter().map(|c| c.seed).collect(),
        }
    }

    /// Writes the draws of one chain as CSV: one row per retained iteration
    /// with coefficient, `tau2_<term>` and `omega_<term>` columns.
    pub fn write_csv<W: Write>(&self, chain: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| BctmError::Numerical(format!("writing draws: {e}"));
        let mut header = self.coefficient_names.clone();
        header.extend(self.term_names.iter().map(|t| format!("tau2_{t}")));
        header.extend(self.term_names.iter().map(|t| format!("omega_{t}")));
        w.write_record(&header).map_err(io)?;
        for s in (0..self.len()).filter(|&s| self.chain[s] == chain) {
            let row = self.beta[s]
                .iter()
                .chain(&self.tau2[s])
                .chain(&self.omega[s])
                .map(|v| format!("{v:e}"));
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| BctmError::Numerical(format!("writing draws: {e}")))?;
        Ok(())
    }
}

impl PosteriorDraws {
    /// Reads draws written by [`PosteriorDraws::write_csv`], one reader per
    /// chain, checking the header against `design`. Sampler settings and
    /// per-chain diagnostics are not stored in the files and stay empty.
    pub fn read_csv<R: Read>(design: &ModelDesign, chains: Vec<R>) -> Result<Self> {
        let dim = design.dim();
        let term_names: Vec<String> = design.terms.iter().map(|t| t.name.clone()).collect();
        let nt = term_names.len();
        let mut draws = PosteriorDraws {
            coefficient_names: design.coefficient_names(),
            term_names,
            beta: Vec::new(),
            tau2: Vec::new(),
            omega: Vec::new(),
            chain: Vec::new(),
            chains: Vec::new(),
            ess: vec![0.0; dim],
            iterations: 0,
            warmup: 0,
            burn_in: 0,
        };
        let mut expected = draws.coefficient_names.clone();
        expected.extend(draws.term_names.iter().map(|t| format!("tau2_{t}")));
        expected.extend(draws.term_names.iter().map(|t| format!("omega_{t}")));
        for (c, input) in chains.into_iter().enumerate() {
            let mut r = csv::Reader::from_reader(input);
            let bad = |e: csv::Error| BctmError::InvalidData(format!("chain {c} draws: {e}"));
            let header: Vec<String> = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
            if header != expected {
                return Err(BctmError::InvalidData(format!(
                    "chain {c} draws do not match the model: expected {} columns starting `{}`",
                    expected.len(),
                    expected.first().map(String::as_str).unwrap_or("")
                )));
            }
            let start = draws.beta.len();
            for (line, rec) in r.records().enumerate() {
                let rec = rec.map_err(bad)?;
                let vals = rec
                    .iter()
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|e| BctmError::InvalidData(format!("chain {c} draws, row {}: {e}", line + 1)))?;
                draws.beta.push(vals[..dim].to_vec());
                draws.tau2.push(vals[dim..dim + nt].to_vec());
                draws.omega.push(vals[dim + nt..].to_vec());
                draws.chain.push(c);
            }
            for k in 0..dim {
                let x: Vec<f64> = draws.beta[start..].iter().map(|b| b[k]).collect();
                draws.ess[k] += effective_sample_size(&x);
            }
        }
        Ok(draws)
    }
}

struct ChainOutput {
    beta: Vec<Vec<f64>>,
    tau2: Vec<Vec<f64>>,
    omega: Vec<Vec<f64>>,
    diag: ChainDiagnostics,
}

/// Sub-seed of chain `c`.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((chain as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_chain(design: &ModelDesign, cfg: &SamplerConfig, seed: u64) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ParameterState::initial(design);
    let dim = design.dim();
    let nterms = design.terms.len();
    let mut nuts = AdaptiveNuts::new(
        dim,
        cfg.warmup,
        cfg.target_accept,
        cfg.max_tree_depth,
        cfg.divergence_threshold,
    );
    {
        let target = BetaTarget {
            design,
            tau2: &state.tau2,
            omega: &state.omega,
        };
        let mut g = vec![0.0; dim];
        let lp = target.logp_grad(&state.beta, &mut g);
        if !lp.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(BctmError::Numerical("log posterior not finite at the initial state".into()));
        }
        nuts.initialize(&target, &state.beta, &mut rng);
    }
    let mut scales: Vec<ProposalScale> = (0..nterms).map(|_| ProposalScale::new(1.0, MH_TARGET_ACCEPT)).collect();

    let keep = cfg.retained();
    let mut out = ChainOutput {
        beta: Vec::with_capacity(keep),
        tau2: Vec::with_capacity(keep),
        omega: Vec::with_capacity(keep),
        diag: ChainDiagnostics {
            seed,
            ..Default::default()
        },
    };

    for it in 0..cfg.iterations {
        let warm = it < cfg.warmup;
        let stats = nuts_update(&mut nuts, design, &mut state, &mut rng);
        out.diag.leapfrog_steps += stats.n_leapfrog;
        out.diag.step_sizes.push(stats.step_size);
        if stats.divergent {
            if warm {
                out.diag.warmup_divergences += 1;
            } else {
                out.diag.divergences += 1;
            }
        }

        for (j, td) in design.terms.iter().enumerate() {
            let beta_j = &state.beta[design.term_range(j)];
            match td.hyperprior {
                Hyperprior::InverseGamma { a, b } => {
                    state.tau2[j] = gibbs_tau2_ig(beta_j, td, state.omega[j], a, b, &mut rng);
                }
                Hyperprior::ScaleDependent { theta } => {
                    let (t, acc) = mh_tau2_sd(beta_j, td, theta, state.omega[j], state.tau2[j], scales[j].sd, &mut rng);
                    state.tau2[j] = t;
                    scales[j].record(acc, warm);
                }
                Hyperprior::Fixed => {}
            }
        }
        for (j, td) in design.terms.iter().enumerate() {
            if td.samples_omega() {
                let beta_j = &state.beta[design.term_range(j)];
                state.omega[j] = gibbs_omega(beta_j, td, state.tau2[j], &mut rng);
            }
        }
        if it + 1 == cfg.warmup {
            scales.iter_mut().for_each(ProposalScale::reset_counts);
        }

        if it >= cfg.burn_in {
            let (_, _, ev) = log_likelihood(design, &state.beta, false);
            out.diag.floored += (ev.floored > 0) as usize;
            out.diag.clipped += (ev.clipped > 0) as usize;
            out.diag.tree_depths.push(stats.tree_depth);
            out.diag.accept_stats.push(stats.accept_stat);
            out.beta.push(state.beta.clone());
            out.tau2.push(state.tau2.clone());
            out.omega.push(state.omega.clone());
        }
    }

    let post = cfg.iterations - cfg.warmup;
    if post > 0 && 2 * out.diag.divergences > post {
        return Err(BctmError::DivergenceAbort {
            divergent: out.diag.divergences,
            total: post,
        });
    }
    if out.diag.divergences > 0 {
        log::warn!("{} divergent transitions after warmup", out.diag.divergences);
    }
    out.diag.tau2_acceptance = design
        .terms
        .iter()
        .zip(&scales)
        .map(|(td, s)| matches!(td.hyperprior, Hyperprior::ScaleDependent { .. }).then(|| s.acceptance_rate()))
        .collect();
    Ok(out)
}

/// Runs `cfg.chains` independent chains on an assembled model.
pub fn sample(design: &ModelDesign, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let outputs: Vec<Result<ChainOutput>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(design, cfg, chain_seed(cfg.seed, c)))
        .collect();
    let dim = design.dim();
    let mut draws = PosteriorDraws {
        coefficient_names: design.coefficient_names(),
        term_names: design.terms.iter().map(|t| t.name.clone()).collect(),
        beta: Vec::new(),
        tau2: Vec::new(),
        omega: Vec::new(),
        chain: Vec::new(),
        chains: Vec::new(),
        ess: vec![0.0; dim],
        iterations: cfg.iterations,
        warmup: cfg.warmup,
        burn_in: cfg.burn_in,
    };
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for k in 0..dim {
            let x: Vec<f64> = out.beta.iter().map(|b| b[k]).collect();
            draws.ess[k] += effective_sample_size(&x);
        }
        draws.chain.extend(std::iter::repeat_n(c, out.beta.len()));
        draws.beta.extend(out.beta);
        draws.tau2.extend(out.tau2);
        draws.omega.extend(out.omega);
        draws.chains.push(out.diag);
    }
    Ok(draws)
}

/// Builds the model against `data` and samples its posterior.
pub fn run_mcmc(model: &ModelSpec, data: &DataSet, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    Ok(fit(model, data, cfg)?.draws)
}

/// A fitted model: the assembled design together with its draws.
#[derive(Clone, Debug)]
pub struct Fit {
    pub design: ModelDesign,
    pub draws: PosteriorDraws,
}

pub fn fit(model: &ModelSpec, data: &DataSet, cfg: &SamplerConfig) -> Result<Fit> {
    let design = ModelDesign::build(model, data)?;
    let draws = sample(&design, cfg)?;
    Ok(Fit { design, draws })
}
