//! Hierarchical model objects: what a fit conditions on ([`DatasetView`]),
//! how it is configured ([`ModelSpec`]), and the pure pieces of the
//! posterior (likelihood, spline mean, knots, base-measure hyper-priors).

mod hyperprior;
mod knots;
mod likelihood;
mod spline;
mod view;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hyperprior::{data_dependent_hyperpriors, BaseHyperPrior, DataDependentRule};
pub use knots::{default_knots, quantile_type7};
pub use likelihood::{bivariate_normal_logpdf, log_likelihood, normal_logpdf, LatentState};
pub use spline::{spline_eval, CandidateTerm, SplineState};
pub use view::{build_view, DatasetView, Observation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("missing latent value for {0}")]
    MissingLatent(String),
    #[error("model configuration: {0}")]
    Config(String),
}

/// Which data a fit conditions on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// All clinical and active-candidate rows.
    Full,
    /// Trial's clinical row removed; its candidate rows kept.
    Loo(String),
    /// Trial's clinical row and every candidate row removed.
    NullLoo(String),
    /// Clinical rows only.
    Null,
}

impl Mode {
    pub fn is_null(&self) -> bool {
        matches!(self, Mode::Null | Mode::NullLoo(_))
    }

    pub fn left_out(&self) -> Option<&str> {
        match self {
            Mode::Loo(j) | Mode::NullLoo(j) => Some(j),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotSource {
    /// Estimated effects of the candidate the knots belong to.
    Candidate,
    /// Estimated clinical effects.
    Clinical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    /// Type-7 empirical quantiles at `probs` of the view's estimates.
    Percentiles { probs: Vec<f64>, source: KnotSource },
    /// Same explicit knots for every candidate.
    Explicit(Vec<f64>),
}

impl Default for KnotRule {
    fn default() -> Self {
        KnotRule::Percentiles {
            probs: vec![0.33, 0.66],
            source: KnotSource::Candidate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasePrior {
    DataDependent(DataDependentRule),
    Explicit(BaseHyperPrior),
}

impl Default for BasePrior {
    fn default() -> Self {
        BasePrior::DataDependent(DataDependentRule::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Prior precision of beta0 and each beta1.
    pub beta_precision: f64,
    /// kappa²_b ~ inverse-gamma(shape, scale).
    pub kappa2_shape: f64,
    pub kappa2_scale: f64,
    /// sigma²_eps ~ inverse-gamma(shape, scale).
    pub sigma2_eps_shape: f64,
    pub sigma2_eps_scale: f64,
    pub base: BasePrior,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            beta_precision: 1e-6,
            kappa2_shape: 1.0,
            kappa2_scale: 3.0,
            sigma2_eps_shape: 0.01,
            sigma2_eps_scale: 0.01,
            base: BasePrior::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondStage {
    /// beta0 + sum_k (beta1_k t + sum_m b_mk |t - r_mk|).
    Spline,
    /// beta0 + sum_k beta1_k t (b ≡ 0, no knots).
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStage {
    /// Truncated stick-breaking DP mixture of normals.
    DpMixture,
    /// A single normal component (truncation 1).
    SingleNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T1Update {
    Metropolis,
    /// Exact normal full conditional; requires a linear second stage.
    Conjugate,
}

/// Parameters held at fixed values instead of sampled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    /// Every knot coefficient held at this value.
    pub spline_b: Option<f64>,
    pub kappa2_b: Option<f64>,
    pub sigma2_eps: Option<f64>,
    /// Every mixture component held at (mu, tau²); base hyper-parameters and
    /// assignments are then irrelevant and not updated.
    pub dp_component: Option<[f64; 2]>,
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub candidates: Vec<String>,
    #[serde(default)]
    pub knots: KnotRule,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default = "default_second_stage")]
    pub second_stage: SecondStage,
    #[serde(default = "default_first_stage")]
    pub first_stage: FirstStage,
    #[serde(default = "default_t1_update")]
    pub t1_update: T1Update,
    #[serde(default)]
    pub fixed: FixedParams,
}

fn default_mode() -> Mode {
    Mode::Full
}
fn default_second_stage() -> SecondStage {
    SecondStage::Spline
}
fn default_first_stage() -> FirstStage {
    FirstStage::DpMixture
}
fn default_t1_update() -> T1Update {
    T1Update::Metropolis
}

impl ModelSpec {
    /// The nonparametric model of the surrogate evaluation method.
    pub fn new(mode: Mode, candidates: &[String]) -> Self {
        let candidates = if mode.is_null() { Vec::new() } else { candidates.to_vec() };
        Self {
            mode,
            candidates,
            knots: KnotRule::default(),
            priors: Priors::default(),
            second_stage: SecondStage::Spline,
            first_stage: FirstStage::DpMixture,
            t1_update: T1Update::Metropolis,
            fixed: FixedParams::default(),
        }
    }

    /// Parametric comparator: linear second stage, single-normal first
    /// stage, conjugate T1 updates.
    pub fn parametric(mode: Mode, candidates: &[String]) -> Self {
        Self {
            second_stage: SecondStage::Linear,
            first_stage: FirstStage::SingleNormal,
            t1_update: T1Update::Conjugate,
            ..Self::new(mode, candidates)
        }
    }

    /// Same model settings with another mode (candidates cleared for null
    /// modes).
    pub fn with_mode(&self, mode: Mode, candidates: &[String]) -> Self {
        let mut s = self.clone();
        s.candidates = if mode.is_null() { Vec::new() } else { candidates.to_vec() };
        s.mode = mode;
        s
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.mode.is_null() && !self.candidates.is_empty() {
            return Err(ModelError::Config("null modes take no candidates".into()));
        }
        if self.t1_update == T1Update::Conjugate
            && self.second_stage == SecondStage::Spline
            && self.fixed.spline_b != Some(0.0)
        {
            return Err(ModelError::Config(
                "conjugate T1 updates need a linear second stage".into(),
            ));
        }
        let p = &self.priors;
        for (name, v) in [
            ("beta_precision", p.beta_precision),
            ("kappa2_shape", p.kappa2_shape),
            ("kappa2_scale", p.kappa2_scale),
            ("sigma2_eps_shape", p.sigma2_eps_shape),
            ("sigma2_eps_scale", p.sigma2_eps_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if let KnotRule::Explicit(k) = &self.knots {
            if k.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(ModelError::Config("explicit knots must be strictly increasing".into()));
            }
        }
        if let Some([_, tau2]) = self.fixed.dp_component {
            if !(tau2 > 0.0) {
                return Err(ModelError::Config("fixed component variance must be positive".into()));
            }
        }
        Ok(())
    }
}
