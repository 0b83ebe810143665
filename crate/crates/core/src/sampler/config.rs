use serde::{Deserialize, Serialize};

use crate::error::{BctmError, Result};

fn default_iterations() -> usize {
    4000
}
fn default_warmup() -> usize {
    2000
}
fn default_burn_in() -> usize {
    2000
}
fn default_target_accept() -> f64 {
    0.90
}
fn default_max_tree_depth() -> usize {
    10
}
fn default_divergence_threshold() -> f64 {
    1000.0
}
fn default_chains() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Leading iterations discarded from the output.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default = "default_max_tree_depth")]
    pub max_tree_depth: usize,
    /// Energy error above which a trajectory counts as divergent.
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            warmup: default_warmup(),
            burn_in: default_burn_in(),
            target_accept: default_target_accept(),
            max_tree_depth: default_max_tree_depth(),
            divergence_threshold: default_divergence_threshold(),
            seed: 0,
            chains: default_chains(),
        }
    }
}

impl SamplerConfig {
    /// Shorter schedule for tests and smoke runs.
    pub fn fast() -> Self {
        Self {
            iterations: 1000,
            warmup: 500,
            burn_in: 500,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn retained(&self) -> usize {
        self.iterations - self.burn_in
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in <= self.warmup && self.warmup <= self.iterations) {
            return Err(BctmError::InvalidParameter(format!(
                "need burn_in <= warmup <= iterations, got {} / {} / {}",
                self.burn_in, self.warmup, self.iterations
            )));
        }
        if self.iterations == self.burn_in {
            return Err(BctmError::InvalidParameter("no iterations retained after burn-in".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(BctmError::InvalidParameter(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.chains == 0 {
            return Err(BctmError::InvalidParameter("chains must be at least 1".into()));
        }
        Ok(())
    }
}
