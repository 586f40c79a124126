//! Posterior sampling for any [`ModelSpec`]: blocked Gibbs over the DP
//! layers and regression block, random-walk Metropolis for latent T1.

mod chain;
mod diagnostics;
pub mod dist;
mod dp;
mod draws;
pub mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatasetView, ModelError, ModelSpec};

pub use chain::{Chain, Prepared};
pub use diagnostics::{diagnostics, effective_sample_size, split_rhat, Diagnostic, Diagnostics, DiagnosticsSummary};
pub use draws::{ChainDraws, PosteriorDraws};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("diagnostics need at least 2 chains and 50 draws per chain, got {chains} x {draws}")]
    InsufficientDraws { chains: usize, draws: usize },
    #[error("draws io: {0}")]
    Io(String),
}

/// How much per-sweep state is kept in the draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trace {
    /// Latent effects, regression block and scalar DP state per layer.
    #[default]
    Standard,
    /// Also per-trial cluster label and component (mu, tau2).
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    /// DP truncation level; `None` means max(50, number of trials).
    pub dp_truncation: Option<usize>,
    pub trace: Trace,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            burn_in: 5000,
            draws: 5000,
            thin: 1,
            seed: 20_160_101,
            adapt_window: 100,
            dp_truncation: None,
            trace: Trace::Standard,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        for (name, v) in [
            ("chains", self.chains),
            ("burn_in", self.burn_in),
            ("draws", self.draws),
            ("thin", self.thin),
            ("adapt_window", self.adapt_window),
        ] {
            if v == 0 {
                return Err(SamplerError::Config(format!("{name} must be positive")));
            }
        }
        if self.dp_truncation == Some(0) {
            return Err(SamplerError::Config("dp_truncation must be positive".into()));
        }
        Ok(())
    }

    pub fn truncation_for(&self, n_trials: usize) -> usize {
        self.dp_truncation.unwrap_or(n_trials.max(50))
    }

    /// Same settings with another base seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Fingerprint of a model specification, stable across runs.
pub fn spec_fingerprint(spec: &ModelSpec) -> u64 {
    rng::fnv1a(&serde_json::to_vec(spec).expect("spec serializes"))
}

/// Sample the posterior of `spec` given `view`. Chains run concurrently on
/// the current rayon pool, each with its own stream derived from
/// `(config.seed, chain index)`.
pub fn run(spec: &ModelSpec, view: &DatasetView, config: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    let prepared = Prepared::new(spec, view, config)?;
    let chains: Vec<ChainDraws> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&prepared, config, c))
        .collect::<Result<_, _>>()?;
    Ok(PosteriorDraws {
        columns: prepared.columns().to_vec(),
        chains,
        seed: config.seed,
        fingerprint: spec_fingerprint(spec),
    })
}

fn run_chain(p: &Prepared, config: &SamplerConfig, index: usize) -> Result<ChainDraws, SamplerError> {
    let mut rng = rng::stream(config.seed, &[index as u64]);
    let mut chain = Chain::init(p, &mut rng);
    for it in 0..config.burn_in {
        chain.sweep(p, &mut rng, chain::Phase::Adapt);
        if (it + 1) % config.adapt_window == 0 {
            chain.adapt(p, config.adapt_window);
        }
    }
    chain.reset_counters();
    let width = p.columns().len();
    let mut values = Vec::with_capacity(width * config.draws);
    for _ in 0..config.draws {
        for _ in 0..config.thin {
            chain.sweep(p, &mut rng, chain::Phase::Sample);
        }
        chain.record(p, &mut values)?;
    }
    let sweeps = config.draws * config.thin;
    let omega_acceptance = if chain.layers.is_empty() {
        0.0
    } else {
        chain.layers.iter().map(|l| l.omega_accepted as f64).sum::<f64>()
            / (sweeps * chain.layers.len()) as f64
    };
    Ok(ChainDraws {
        n_draws: config.draws,
        values,
        t1_acceptance: (chain.t1_proposal_total > 0)
            .then(|| chain.t1_accept_total as f64 / chain.t1_proposal_total as f64),
        omega_acceptance,
    })
}
