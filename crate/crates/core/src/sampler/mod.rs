//! Posterior sampling.

mod adapt;
mod config;
mod diagnostics;
mod gibbs;
mod mcmc;
mod nuts;

pub use adapt::{AdaptiveNuts, DualAveraging, WindowSchedule, Welford};
pub use config::SamplerConfig;
pub use diagnostics::{effective_sample_size, ChainDiagnostics};
pub use gibbs::{
    gibbs_omega, gibbs_tau2_ig, ig_full_conditional, mh_log_scale, mh_tau2_sd, omega_log_weights, sd_log_target,
    ProposalScale,
};
pub use mcmc::{chain_seed, fit, nuts_update, run_mcmc, sample, BetaTarget, DiagnosticsSummary, Fit, PosteriorDraws};
pub use nuts::{LogDensity, Nuts, TransitionStats};
