//! Comparators: least squares on the estimated effects, and the parametric
//! hierarchical model (linear second stage, single-normal first stage).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cv::{self, CvError, CvOptions, ErrorDistribution, FitJob, FitResult, Refit};
use crate::data::Dataset;
use crate::mcmc::{dist, rng, PosteriorDraws, SamplerConfig};
use crate::model::{Mode, ModelSpec};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("candidate {0}: estimated effects do not vary, the regression is rank deficient")]
    RankDeficient(String),
    #[error("need at least 3 evaluation trials with the candidate, got {0}")]
    TooFewTrials(usize),
    #[error(transparent)]
    Cv(#[from] CvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ols,
    Dh,
}

/// Prior constants of the parametric comparator: N(0, 1/beta_precision) on
/// intercept and slope, IG(tau2_shape, tau2_scale) on the residual variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DhPriors {
    pub beta_precision: f64,
    pub tau2_shape: f64,
    pub tau2_scale: f64,
}

impl Default for DhPriors {
    fn default() -> Self {
        Self {
            beta_precision: 1e-6,
            tau2_shape: 0.01,
            tau2_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    #[serde(default)]
    pub dh_priors: DhPriors,
}

/// Model template of the parametric comparator.
pub fn dh_spec(priors: &DhPriors) -> ModelSpec {
    let mut spec = ModelSpec::parametric(Mode::Full, &[]);
    spec.priors.beta_precision = priors.beta_precision;
    spec.priors.sigma2_eps_shape = priors.tau2_shape;
    spec.priors.sigma2_eps_scale = priors.tau2_scale;
    spec
}

/// Simple linear regression y = a + b x.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Residual variance on n - 2 degrees of freedom (NaN when n = 2).
    pub s2: f64,
    pub leverage: Vec<f64>,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 1e-12 * (1.0 + mx * mx) * n) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some(LineFit {
        intercept,
        slope,
        s2: if x.len() > 2 { ssr / (n - 2.0) } else { f64::NAN },
        leverage: x.iter().map(|v| 1.0 / n + (v - mx).powi(2) / sxx).collect(),
    })
}

/// Leave-one-out least squares of T̂2 on T̂1 for `candidate`.
///
/// The loo point of trial j is the fit without j evaluated at T̂1_j. Each
/// d̃_j sample is |full-data fitted value + N(0, s² h_jj) - loo point|, the
/// spread being the sampling variance of the full-data fitted value.
pub fn ols_loo(
    dataset: &Dataset,
    candidate: &str,
    draws_per_trial: usize,
    seed: u64,
) -> Result<ErrorDistribution, BaselineError> {
    let mut trials = Vec::new();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for t in dataset.trials() {
        if let (Some(c), Some(m)) = (t.clinical, t.candidates.get(candidate)) {
            trials.push(t.id.clone());
            x.push(m.effect);
            y.push(c.effect);
        }
    }
    let n = trials.len();
    if n < 3 {
        return Err(BaselineError::TooFewTrials(n));
    }
    let rank = || BaselineError::RankDeficient(candidate.to_string());
    let full = fit_line(&x, &y).ok_or_else(rank)?;
    let mut points = Vec::with_capacity(n);
    for j in 0..n {
        let xs: Vec<f64> = (0..n).filter(|&i| i != j).map(|i| x[i]).collect();
        let ys: Vec<f64> = (0..n).filter(|&i| i != j).map(|i| y[i]).collect();
        let f = fit_line(&xs, &ys).ok_or_else(rank)?;
        points.push(f.intercept + f.slope * x[j]);
    }
    let mut r = rng::stream(seed, &[rng::label_tag("ols"), rng::label_tag(candidate)]);
    let s2 = if full.s2.is_finite() { full.s2 } else { 0.0 };
    let per_trial = (0..n)
        .map(|j| {
            let fitted = full.intercept + full.slope * x[j];
            let sd = (s2 * full.leverage[j]).sqrt();
            (0..draws_per_trial)
                .map(|_| (dist::normal(&mut r, fitted, sd) - points[j]).abs())
                .collect()
        })
        .collect();
    Ok(ErrorDistribution::from_parts(
        &format!("ols:{candidate}"),
        trials,
        points,
        per_trial,
        None,
        seed,
    )?)
}

/// Full fit and per-trial refits of the parametric comparator for one
/// candidate; combine with shared null refits through
/// [`cv::error_distribution`].
pub fn dh_fit_loo(
    dataset: &Dataset,
    candidate: &str,
    priors: &DhPriors,
    config: &SamplerConfig,
    options: &CvOptions,
) -> Result<(PosteriorDraws, Vec<Refit>), BaselineError> {
    let data = cv::evaluation_subset(dataset);
    let trials = data.evaluation_trials();
    if trials.len() < 3 {
        return Err(BaselineError::TooFewTrials(trials.len()));
    }
    let template = dh_spec(priors);
    let k = [candidate.to_string()];
    let mut jobs = vec![FitJob::full("dh_full", candidate, template.with_mode(Mode::Full, &k))];
    jobs.extend(cv::candidate_jobs("dh_loo", &trials, candidate, &template));
    let mut results = cv::run_fit_jobs(&data, &jobs, config, options)?.into_iter();
    let full = results.next().expect("full job").into_full();
    Ok((full, results.map(FitResult::into_refit).collect()))
}

#[cfg(test)]
mod tests;
