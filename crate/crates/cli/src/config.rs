//! Effective run configuration: flags over config file over defaults.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use tlgs::baselines::DhPriors;
use tlgs::cv::CvOptions;
use tlgs::mcmc::SamplerConfig;
use tlgs::model::{Mode, ModelSpec};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    /// Template of the candidate model; mode and candidates are set per fit.
    pub model: ModelSpec,
    pub null_model: ModelSpec,
    pub cv: CvOptions,
    /// Pairs drawn for each comparison probability.
    pub n_pairs: usize,
    pub dh_priors: DhPriors,
    /// OLS draws per trial in simulations.
    pub ols_draws: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            model: ModelSpec::new(Mode::Full, &[]),
            null_model: ModelSpec::new(Mode::Null, &[]),
            cv: CvOptions::default(),
            n_pairs: 20_000,
            dh_priors: DhPriors::default(),
            ols_draws: 4000,
        }
    }
}

/// Sampler and run flags shared by the fitting commands.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// DP truncation level (default max(50, number of trials)).
    #[arg(long)]
    pub truncation: Option<usize>,
    #[arg(long)]
    pub n_pairs: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "TLGS_WORKERS")]
    pub workers: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let s = &mut cfg.sampler;
        if let Some(v) = self.chains {
            s.chains = v;
        }
        if let Some(v) = self.burn_in {
            s.burn_in = v;
        }
        if let Some(v) = self.draws {
            s.draws = v;
        }
        if let Some(v) = self.thin {
            s.thin = v;
        }
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.truncation {
            s.dp_truncation = Some(v);
        }
        if let Some(v) = self.n_pairs {
            cfg.n_pairs = v;
        }
        // worker count never changes results, so it stays out of the config
        cfg.cv.workers = 0;
        cfg.sampler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        cfg.null_model.validate().map_err(|e| CliError::Config(format!("null_model: {e}")))?;
        if cfg.n_pairs == 0 || cfg.ols_draws == 0 {
            return Err(CliError::Config("n_pairs and ols_draws must be positive".into()));
        }
        Ok(cfg)
    }
}
