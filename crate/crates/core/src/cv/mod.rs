//! Leave-one-trial-out computation: the full fit, per-candidate refits
//! without a trial's clinical row, null refits, and the absolute prediction
//! error distributions built from them.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Link};
use crate::mcmc::{self, diagnostics, rng, DiagnosticsSummary, PosteriorDraws, SamplerConfig, SamplerError};
use crate::model::{build_view, quantile_type7, Mode, ModelError, ModelSpec};

pub use report::{kde, rank_candidates, CandidateRow, Density, PairRow, RankReport};

#[derive(Debug, Error)]
pub enum CvError {
    #[error("{stage}: {source}")]
    Sampler {
        stage: String,
        #[source]
        source: SamplerError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("need at least 3 evaluation trials, got {0}")]
    TooFewTrials(usize),
    #[error("trials differ between the full fit and the refits: {0}")]
    MismatchedTrials(String),
    #[error("error distribution has no samples")]
    EmptyDistribution,
    #[error("trial {0} already has a clinical summary")]
    HasClinicalRow(String),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Point summary of a refit's posterior used as the out-of-sample
/// prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooPoint {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    pub point: LooPoint,
    /// Keep every refit's full draws, not only the left-out trial's T2.
    pub keep_refit_draws: bool,
    /// Worker threads for independent fits; 0 uses the ambient pool.
    pub workers: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            point: LooPoint::Mean,
            keep_refit_draws: false,
            workers: 0,
        }
    }
}

/// One refit with trial `trial`'s clinical row removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Refit {
    pub trial: String,
    /// Pooled draws of the left-out trial's T2.
    pub t2: Vec<f64>,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub draws: Option<PosteriorDraws>,
}

impl Refit {
    pub fn point(&self, how: LooPoint) -> f64 {
        match how {
            LooPoint::Mean => self.t2.iter().sum::<f64>() / self.t2.len() as f64,
            LooPoint::Median => {
                let mut v = self.t2.clone();
                v.sort_by(f64::total_cmp);
                quantile_type7(&v, 0.5)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FourStep {
    pub full: PosteriorDraws,
    pub full_diagnostics: Option<DiagnosticsSummary>,
    /// Candidate -> refits in evaluation-trial order.
    pub loo: BTreeMap<String, Vec<Refit>>,
    pub null_loo: Vec<Refit>,
}

impl FourStep {
    pub fn n_fits(&self) -> usize {
        1 + self.loo.values().map(Vec::len).sum::<usize>() + self.null_loo.len()
    }

    /// Largest R̂ and smallest ESS over every fit that could be diagnosed.
    pub fn worst_diagnostics(&self) -> Option<DiagnosticsSummary> {
        let all = self
            .full_diagnostics
            .iter()
            .chain(self.loo.values().flatten().filter_map(|r| r.diagnostics.as_ref()))
            .chain(self.null_loo.iter().filter_map(|r| r.diagnostics.as_ref()));
        worst(all)
    }
}

pub(crate) fn worst<'a>(it: impl Iterator<Item = &'a DiagnosticsSummary>) -> Option<DiagnosticsSummary> {
    it.fold(None, |acc: Option<DiagnosticsSummary>, d| {
        let mut out = acc.unwrap_or_else(|| d.clone());
        if d.max_rhat > out.max_rhat {
            out.max_rhat = d.max_rhat;
            out.max_rhat_column.clone_from(&d.max_rhat_column);
        }
        if d.min_ess < out.min_ess {
            out.min_ess = d.min_ess;
            out.min_ess_column.clone_from(&d.min_ess_column);
        }
        Some(out)
    })
}

/// Seed of a fit, from its identity only.
pub fn job_seed(seed: u64, stage: &str, candidate: &str, trial: &str) -> u64 {
    rng::derive_seed(
        seed,
        &[rng::label_tag(stage), rng::label_tag(candidate), rng::label_tag(trial)],
    )
}

/// Run `f(i)` for `i in 0..n` on a pool of `workers` threads (0 = ambient
/// pool). Results come back in index order.
pub fn run_jobs<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>, CvError>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if workers == 0 {
        return Ok((0..n).into_par_iter().map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CvError::Pool(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

/// Dataset restricted to trials with a clinical row.
pub fn evaluation_subset(dataset: &Dataset) -> Dataset {
    let keep: BTreeSet<String> = dataset.evaluation_trials().into_iter().map(str::to_string).collect();
    dataset.subset(&keep)
}

pub fn fit(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &SamplerConfig,
    stage: &str,
) -> Result<PosteriorDraws, CvError> {
    let view = build_view(dataset, spec)?;
    mcmc::run(spec, &view, config).map_err(|source| CvError::Sampler {
        stage: stage.to_string(),
        source,
    })
}

pub(crate) fn summarize(draws: &PosteriorDraws) -> Option<DiagnosticsSummary> {
    diagnostics(draws).ok().map(|d| d.summary())
}

/// One independent fit. An empty `trial` means a fit on all rows; otherwise
/// the fit leaves out that trial's clinical row and yields a [`Refit`].
#[derive(Debug, Clone)]
pub struct FitJob {
    pub stage: String,
    pub candidate: String,
    pub trial: String,
    pub spec: ModelSpec,
}

#[derive(Debug, Clone)]
pub enum FitResult {
    Full(PosteriorDraws),
    Refit(Refit),
}

impl FitResult {
    pub fn into_full(self) -> PosteriorDraws {
        match self {
            FitResult::Full(d) => d,
            FitResult::Refit(_) => panic!("expected a full fit"),
        }
    }

    pub fn into_refit(self) -> Refit {
        match self {
            FitResult::Refit(r) => r,
            FitResult::Full(_) => panic!("expected a refit"),
        }
    }
}

impl FitJob {
    pub fn full(stage: &str, candidate: &str, spec: ModelSpec) -> Self {
        Self {
            stage: stage.into(),
            candidate: candidate.into(),
            trial: String::new(),
            spec,
        }
    }

    pub fn refit(stage: &str, candidate: &str, trial: &str, spec: ModelSpec) -> Self {
        Self {
            stage: stage.into(),
            candidate: candidate.into(),
            trial: trial.into(),
            spec,
        }
    }

    fn label(&self) -> String {
        match (self.candidate.is_empty(), self.trial.is_empty()) {
            (true, true) => self.stage.clone(),
            (false, true) => format!("{}[{}]", self.stage, self.candidate),
            (true, false) => format!("{}[{}]", self.stage, self.trial),
            (false, false) => format!("{}[{}][{}]", self.stage, self.candidate, self.trial),
        }
    }
}

/// Run independent fits on `data`, each seeded by its identity, and
/// return results in job order.
pub fn run_fit_jobs(
    data: &Dataset,
    jobs: &[FitJob],
    config: &SamplerConfig,
    options: &CvOptions,
) -> Result<Vec<FitResult>, CvError> {
    let run_one = |i: usize| -> Result<FitResult, CvError> {
        let job = &jobs[i];
        let cfg = config.with_seed(job_seed(config.seed, &job.stage, &job.candidate, &job.trial));
        let draws = fit(data, &job.spec, &cfg, &job.label())?;
        Ok(if job.trial.is_empty() {
            FitResult::Full(draws)
        } else {
            FitResult::Refit(refit(&job.trial, draws, options))
        })
    };
    run_jobs(options.workers, jobs.len(), run_one)?.into_iter().collect()
}

/// One refit of `candidate` alone per evaluation trial.
pub fn candidate_jobs(stage: &str, trials: &[&str], candidate: &str, model: &ModelSpec) -> Vec<FitJob> {
    trials
        .iter()
        .map(|t| {
            FitJob::refit(
                stage,
                candidate,
                t,
                model.with_mode(Mode::Loo(t.to_string()), &[candidate.to_string()]),
            )
        })
        .collect()
}

pub fn null_jobs(stage: &str, trials: &[&str], null_model: &ModelSpec) -> Vec<FitJob> {
    trials
        .iter()
        .map(|t| FitJob::refit(stage, "", t, null_model.with_mode(Mode::NullLoo(t.to_string()), &[])))
        .collect()
}

/// Steps 1-3: one full fit of `model` on every candidate, one refit per
/// (candidate, evaluation trial) without that trial's clinical row, and one
/// null refit per evaluation trial. `model` and `null_model` supply priors
/// and structure; their modes and candidate lists are replaced per job.
pub fn four_step(
    dataset: &Dataset,
    candidates: &[String],
    model: &ModelSpec,
    null_model: &ModelSpec,
    config: &SamplerConfig,
    options: &CvOptions,
) -> Result<FourStep, CvError> {
    let data = evaluation_subset(dataset);
    let trials: Vec<&str> = data.evaluation_trials();
    if trials.len() < 3 {
        return Err(CvError::TooFewTrials(trials.len()));
    }
    // without candidates the full model is the null model
    let full_spec = if candidates.is_empty() {
        null_model.with_mode(Mode::Null, &[])
    } else {
        model.with_mode(Mode::Full, candidates)
    };
    let mut jobs = vec![FitJob::full("full", "", full_spec)];
    for k in candidates {
        jobs.extend(candidate_jobs("loo", &trials, k, model));
    }
    jobs.extend(null_jobs("null_loo", &trials, null_model));
    let mut results = run_fit_jobs(&data, &jobs, config, options)?.into_iter();
    let full = results.next().expect("full job").into_full();
    let mut loo = BTreeMap::new();
    for k in candidates {
        loo.insert(k.clone(), results.by_ref().take(trials.len()).map(FitResult::into_refit).collect());
    }
    let null_loo = results.map(FitResult::into_refit).collect();
    Ok(FourStep {
        full_diagnostics: summarize(&full),
        full,
        loo,
        null_loo,
    })
}

/// Label of the null model's error distribution.
pub const NULL_LABEL: &str = "null";

/// Error distributions of every candidate and the null, with their ranking.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub errors: Vec<ErrorDistribution>,
    pub null: ErrorDistribution,
    pub report: RankReport,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub n_fits: usize,
}

/// Steps 1-4 and the ranking for `candidates` (possibly none).
pub fn evaluate(
    dataset: &Dataset,
    candidates: &[String],
    model: &ModelSpec,
    null_model: &ModelSpec,
    config: &SamplerConfig,
    options: &CvOptions,
    n_pairs: usize,
) -> Result<Evaluation, CvError> {
    if candidates.iter().any(|c| c == NULL_LABEL) {
        return Err(CvError::Model(ModelError::Config(format!(
            "candidate id {NULL_LABEL:?} is reserved for the null model"
        ))));
    }
    let fs = four_step(dataset, candidates, model, null_model, config, options)?;
    let mix = MixtureOptions {
        point: options.point,
        size: None,
        seed: config.seed,
    };
    let errors = candidates
        .iter()
        .map(|k| error_distribution(&fs.full, &fs.loo[k], k, &mix))
        .collect::<Result<Vec<_>, _>>()?;
    let null = error_distribution(&fs.full, &fs.null_loo, NULL_LABEL, &mix)?;
    let report = rank_candidates(&errors, &null, n_pairs, config.seed)?;
    Ok(Evaluation {
        errors,
        null,
        report,
        diagnostics: fs.worst_diagnostics(),
        n_fits: fs.n_fits(),
    })
}

fn refit(trial: &str, draws: PosteriorDraws, options: &CvOptions) -> Refit {
    let t2 = draws
        .pooled(&format!("t2[{trial}]"))
        .expect("left-out trial is part of its refit");
    Refit {
        trial: trial.to_string(),
        t2,
        diagnostics: summarize(&draws),
        draws: options.keep_refit_draws.then_some(draws),
    }
}

/// Per-trial absolute prediction errors and their equal-weight mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub label: String,
    pub trials: Vec<String>,
    pub loo_point: Vec<f64>,
    pub per_trial: Vec<Vec<f64>>,
    pub mixture: Vec<f64>,
    /// Trial index each mixture sample came from.
    pub mixture_trial: Vec<usize>,
}

impl ErrorDistribution {
    pub fn mean(&self) -> f64 {
        self.mixture.iter().sum::<f64>() / self.mixture.len() as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let mut v = self.mixture.clone();
        v.sort_by(f64::total_cmp);
        quantile_type7(&v, p)
    }

    /// Mean over trials of the per-trial mean error (no resampling).
    pub fn trial_average(&self) -> f64 {
        let sum: f64 = self
            .per_trial
            .iter()
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
            .sum();
        sum / self.per_trial.len() as f64
    }

    /// Build from per-trial samples; the mixture draws a trial uniformly,
    /// then a sample uniformly within it.
    pub fn from_parts(
        label: &str,
        trials: Vec<String>,
        loo_point: Vec<f64>,
        per_trial: Vec<Vec<f64>>,
        mixture_size: Option<usize>,
        seed: u64,
    ) -> Result<Self, CvError> {
        if per_trial.is_empty() || per_trial.iter().any(Vec::is_empty) {
            return Err(CvError::EmptyDistribution);
        }
        let size = mixture_size.unwrap_or_else(|| per_trial.iter().map(Vec::len).max().unwrap_or(0));
        let mut r = rng::stream(seed, &[rng::label_tag("mixture"), rng::label_tag(label)]);
        let mut mixture = Vec::with_capacity(size);
        let mut mixture_trial = Vec::with_capacity(size);
        use rand::Rng;
        for _ in 0..size {
            let j = r.random_range(0..per_trial.len());
            let s = r.random_range(0..per_trial[j].len());
            mixture.push(per_trial[j][s]);
            mixture_trial.push(j);
        }
        Ok(Self {
            label: label.to_string(),
            trials,
            loo_point,
            per_trial,
            mixture,
            mixture_trial,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureOptions {
    pub point: LooPoint,
    /// Number of mixture samples; `None` uses the per-trial draw count.
    pub size: Option<usize>,
    pub seed: u64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            point: LooPoint::Mean,
            size: None,
            seed: 0,
        }
    }
}

/// d̃_j = |T2_j (full-fit draws) - loo point of trial j|, for every refit.
pub fn error_distribution(
    full: &PosteriorDraws,
    refits: &[Refit],
    label: &str,
    options: &MixtureOptions,
) -> Result<ErrorDistribution, CvError> {
    let mut trials = Vec::with_capacity(refits.len());
    let mut points = Vec::with_capacity(refits.len());
    let mut per_trial = Vec::with_capacity(refits.len());
    for r in refits {
        let draws = full
            .pooled(&format!("t2[{}]", r.trial))
            .ok_or_else(|| CvError::MismatchedTrials(r.trial.clone()))?;
        let point = r.point(options.point);
        per_trial.push(draws.iter().map(|t| (t - point).abs()).collect());
        points.push(point);
        trials.push(r.trial.clone());
    }
    ErrorDistribution::from_parts(label, trials, points, per_trial, options.size, options.seed)
}

/// Monte Carlo estimate of P(D̃_a < D̃_b), ties counted one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub probability: f64,
    pub mcse: f64,
    pub n_pairs: usize,
}

/// Independent pairs, one sample from each mixture. The pairing stream is
/// tied to the unordered pair, so compare(a, b) + compare(b, a) = 1.
pub fn compare(a: &ErrorDistribution, b: &ErrorDistribution, n_pairs: usize, seed: u64) -> Result<Comparison, CvError> {
    if a.mixture.is_empty() || b.mixture.is_empty() || n_pairs == 0 {
        return Err(CvError::EmptyDistribution);
    }
    let swap = (&a.label, a.mixture.len()) > (&b.label, b.mixture.len());
    let (x, y) = if swap { (b, a) } else { (a, b) };
    let mut r = rng::stream(
        seed,
        &[rng::label_tag("compare"), rng::label_tag(&x.label), rng::label_tag(&y.label)],
    );
    use rand::Rng;
    let (mut less, mut ties) = (0usize, 0usize);
    for _ in 0..n_pairs {
        let u = x.mixture[r.random_range(0..x.mixture.len())];
        let v = y.mixture[r.random_range(0..y.mixture.len())];
        if u < v {
            less += 1;
        } else if u == v {
            ties += 1;
        }
    }
    let greater = n_pairs - less - ties;
    let n = n_pairs as f64;
    // doubled counts keep both orientations exact integers
    let num = if swap { 2 * greater + ties } else { 2 * less + ties };
    let p = num as f64 / (2.0 * n);
    Ok(Comparison {
        probability: p,
        mcse: (p * (1.0 - p) / n).sqrt(),
        n_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Efficacy {
    pub mean: f64,
    pub ci95: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub trial: String,
    pub mean: f64,
    pub ci95: Interval,
    #[serde(skip)]
    pub draws: Vec<f64>,
    pub efficacy: Option<Efficacy>,
}

/// Equal-tailed interval from unsorted draws.
pub fn equal_tailed(draws: &[f64], level: f64) -> Interval {
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let a = 0.5 * (1.0 - level);
    Interval {
        lo: quantile_type7(&v, a),
        hi: quantile_type7(&v, 1.0 - a),
    }
}

/// VE = 1 - exp(effect).
pub fn vaccine_efficacy(effect: f64) -> f64 {
    -effect.exp_m1()
}

/// Summaries of a trial's T2 draws from a fit in which it has no clinical
/// row. `link` adds the efficacy scale for log-rate effects.
pub fn predict_new(
    dataset: &Dataset,
    full: &PosteriorDraws,
    trial: &str,
    link: Option<Link>,
) -> Result<PredictionResult, CvError> {
    let entry = dataset.trial(trial).ok_or_else(|| CvError::UnknownTrial(trial.to_string()))?;
    if entry.clinical.is_some() {
        return Err(CvError::HasClinicalRow(trial.to_string()));
    }
    let draws = full
        .pooled(&format!("t2[{trial}]"))
        .ok_or_else(|| CvError::UnknownTrial(trial.to_string()))?;
    Ok(summarize_prediction(trial, draws, link))
}

pub fn summarize_prediction(trial: &str, draws: Vec<f64>, link: Option<Link>) -> PredictionResult {
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let efficacy = (link == Some(Link::Log)).then(|| {
        let ve: Vec<f64> = draws.iter().map(|&t| vaccine_efficacy(t)).collect();
        Efficacy {
            mean: ve.iter().sum::<f64>() / ve.len() as f64,
            ci95: equal_tailed(&ve, 0.95),
        }
    });
    PredictionResult {
        trial: trial.to_string(),
        mean,
        ci95: equal_tailed(&draws, 0.95),
        draws,
        efficacy,
    }
}

/// Fit the full model on the evaluation trials plus the new trial's
/// candidate rows and summarize the new trial's T2.
pub fn fit_and_predict(
    dataset: &Dataset,
    candidates: &[String],
    model: &ModelSpec,
    config: &SamplerConfig,
    trial: &str,
    link: Option<Link>,
) -> Result<(PredictionResult, PosteriorDraws), CvError> {
    let entry = dataset.trial(trial).ok_or_else(|| CvError::UnknownTrial(trial.to_string()))?;
    if entry.clinical.is_some() {
        return Err(CvError::HasClinicalRow(trial.to_string()));
    }
    let mut keep: BTreeSet<String> = dataset.evaluation_trials().into_iter().map(str::to_string).collect();
    keep.insert(trial.to_string());
    let data = dataset.subset(&keep);
    let spec = model.with_mode(Mode::Full, candidates);
    let cfg = config.with_seed(job_seed(config.seed, "predict", "", trial));
    let draws = fit(&data, &spec, &cfg, "predict")?;
    Ok((predict_new(&data, &draws, trial, link)?, draws))
}
