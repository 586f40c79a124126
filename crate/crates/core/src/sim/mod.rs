//! Synthetic multi-trial datasets with known true effects, and the
//! replicate loop that scores the new method and the comparators on them.

mod fixture;
mod run;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::cv::CvError;
use crate::data::{assemble_dataset, DataError, Dataset, TrialSummary, CLINICAL};
use crate::mcmc::{dist, rng};

pub use fixture::{example_subjects, ExampleFixture, ExampleTruth, EXAMPLE_MARKERS};
pub use run::{
    run_scenario, Method, MethodReplicate, MethodSummary, ReplicateResult, ScenarioReport, SimOptions,
};

/// Candidate id of the generated surrogate.
pub const CANDIDATE: &str = "k";
/// Candidate id of the oracle surrogate whose summary is the true T2.
pub const ORACLE: &str = "l";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Cv(#[from] CvError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum T1Dist {
    Normal { mean: f64, sd: f64 },
    /// Equal-weight mixture of N(-1, 1), N(0, 1), N(2, 1).
    Mixture3,
}

/// Mean function of T2 given T1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkFn {
    /// T2 does not depend on T1.
    None { level: f64 },
    Linear { intercept: f64, slope: f64 },
    Cubic { intercept: f64, center: f64, coef: f64 },
    /// Flat below the threshold, cubic above it.
    CubicThreshold { intercept: f64, threshold: f64, coef: f64 },
    Step { threshold: f64, low: f64, high: f64 },
}

impl LinkFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            LinkFn::None { level } => level,
            LinkFn::Linear { intercept, slope } => intercept + slope * t,
            LinkFn::Cubic { intercept, center, coef } => intercept + coef * (t - center).powi(3),
            LinkFn::CubicThreshold { intercept, threshold, coef } => {
                intercept + coef * (t - threshold).max(0.0).powi(3)
            }
            LinkFn::Step { threshold, low, high } => {
                if t > threshold {
                    high
                } else {
                    low
                }
            }
        }
    }
}

fn default_replicates() -> usize {
    20
}

fn default_seed() -> u64 {
    20160101
}

fn default_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(default)]
    pub name: String,
    pub n_trials: usize,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    pub t1_dist: T1Dist,
    pub link: LinkFn,
    #[serde(default = "default_sd")]
    pub t2_given_t1_sd: f64,
    pub se1_scale: f64,
    pub se2_scale: f64,
    /// Per-trial SEs are scale * exp(se_spread * z), z standard normal.
    #[serde(default)]
    pub se_spread: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Fields whose values are harness choices; footnoted in every table.
    #[serde(default)]
    pub harness_constants: Vec<String>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(format!("scenario {}: {m}", self.id)));
        if self.n_trials < 3 {
            return bad(format!("n_trials must be at least 3, got {}", self.n_trials));
        }
        if self.n_replicates == 0 {
            return bad("n_replicates must be positive".into());
        }
        for (name, v) in [
            ("t2_given_t1_sd", self.t2_given_t1_sd),
            ("se1_scale", self.se1_scale),
            ("se2_scale", self.se2_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.se_spread >= 0.0 && self.se_spread.is_finite()) {
            return bad(format!("se_spread must be non-negative, got {}", self.se_spread));
        }
        if let T1Dist::Normal { sd, .. } = self.t1_dist {
            if !(sd > 0.0 && sd.is_finite()) {
                return bad(format!("t1 sd must be positive, got {sd}"));
            }
        }
        Ok(())
    }

    /// Seed of replicate `r`, from the scenario seed, id and index only.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        rng::derive_seed(self.seed, &[rng::label_tag(&self.id), r as u64])
    }

    /// One line naming the harness-chosen constants and their values.
    pub fn footnote(&self) -> String {
        let json = serde_json::to_value(self).unwrap_or_default();
        let parts: Vec<String> = self
            .harness_constants
            .iter()
            .map(|f| format!("{f}={}", json.get(f).map(|v| v.to_string()).unwrap_or_default()))
            .collect();
        format!("scenario {} harness constants: {}", self.id, parts.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetFile {
    pub version: u32,
    pub presets: Vec<ScenarioConfig>,
}

const PRESETS: &str = include_str!("presets.json");

pub fn presets() -> PresetFile {
    serde_json::from_str(PRESETS).expect("packaged presets parse")
}

pub fn preset(id: &str) -> Result<ScenarioConfig, SimError> {
    presets()
        .presets
        .into_iter()
        .find(|p| p.id == id)
        .ok_or_else(|| SimError::Config(format!("unknown scenario {id:?}")))
}

/// A generated dataset with the true effects behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub dataset: Dataset,
    pub trials: Vec<String>,
    pub true_t1: Vec<f64>,
    pub true_t2: Vec<f64>,
}

impl Replicate {
    pub fn true_t2_of(&self, trial: &str) -> Option<f64> {
        self.trials.iter().position(|t| t == trial).map(|i| self.true_t2[i])
    }
}

const MIXTURE_MEANS: [f64; 3] = [-1.0, 0.0, 2.0];

/// Replicate `r` of `config`. Every trial consumes the same fixed sequence
/// of standard variates whatever the scale settings, so configs that differ
/// only in scales see identical truths and standardized noise.
pub fn generate_replicate(config: &ScenarioConfig, r: usize) -> Result<Replicate, SimError> {
    config.validate()?;
    let seed = config.replicate_seed(r);
    let mut g = rng::stream(seed, &[rng::label_tag("generate")]);
    let mut rows = Vec::with_capacity(3 * config.n_trials);
    let (mut trials, mut true_t1, mut true_t2) = (Vec::new(), Vec::new(), Vec::new());
    let width = config.n_trials.to_string().len().max(2);
    for j in 0..config.n_trials {
        let u: f64 = g.random();
        let [z_t1, z_t2, z_se1, z_se2, e1, e2] = std::array::from_fn(|_| dist::normal(&mut g, 0.0, 1.0));
        let t1 = match config.t1_dist {
            T1Dist::Normal { mean, sd } => mean + sd * z_t1,
            T1Dist::Mixture3 => MIXTURE_MEANS[((u * 3.0) as usize).min(2)] + z_t1,
        };
        let t2 = config.link.eval(t1) + config.t2_given_t1_sd * z_t2;
        let se1 = config.se1_scale * (config.se_spread * z_se1).exp();
        let se2 = config.se2_scale * (config.se_spread * z_se2).exp();
        let id = format!("t{:0width$}", j + 1);
        rows.push(TrialSummary::new(&id, CLINICAL, t2 + se2 * e2, se2));
        rows.push(TrialSummary::new(&id, CANDIDATE, t1 + se1 * e1, se1));
        rows.push(TrialSummary::new(&id, ORACLE, t2, se1));
        trials.push(id);
        true_t1.push(t1);
        true_t2.push(t2);
    }
    Ok(Replicate {
        index: r,
        seed,
        dataset: assemble_dataset(&rows)?,
        trials,
        true_t1,
        true_t2,
    })
}

pub fn generate(config: &ScenarioConfig) -> Result<Vec<Replicate>, SimError> {
    (0..config.n_replicates).map(|r| generate_replicate(config, r)).collect()
}

#[cfg(test)]
mod tests;
