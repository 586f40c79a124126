use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{generate_replicate, Replicate, ScenarioConfig, SimError, CANDIDATE, ORACLE};
use crate::baselines::{dh_spec, ols_loo, DhPriors};
use crate::cv::{
    self, compare, error_distribution, summarize, worst, CvOptions, ErrorDistribution, FitJob, FitResult,
    MixtureOptions, Refit,
};
use crate::mcmc::{DiagnosticsSummary, PosteriorDraws, SamplerConfig};
use crate::model::{Mode, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    New,
    Dh,
    Ols,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::New => "new",
            Method::Dh => "dh",
            Method::Ols => "ols",
        }
    }
}

impl FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s.trim() {
            "new" => Ok(Method::New),
            "dh" => Ok(Method::Dh),
            "ols" => Ok(Method::Ols),
            other => Err(SimError::Config(format!("unknown method {other:?} (new, dh, ols)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Worker threads over replicates; 0 uses the ambient pool.
    pub workers: usize,
    /// Pairs drawn for each comparison probability.
    pub n_pairs: usize,
    /// OLS draws per trial.
    pub ols_draws: usize,
    pub dh_priors: DhPriors,
    /// Template of the new method; mode and candidates are set per job.
    pub model: ModelSpec,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            workers: 0,
            n_pairs: 4000,
            ols_draws: 4000,
            dh_priors: DhPriors::default(),
            model: ModelSpec::new(Mode::Full, &[]),
        }
    }
}

/// Scores of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReplicate {
    pub method: Method,
    /// Mean over trials of |true T2 - loo point| for the candidate.
    pub d_hat: f64,
    /// Posterior mean of the candidate's mixture error distribution.
    pub d_tilde_mean: f64,
    pub p_null_less: f64,
    pub p_oracle_less: f64,
    pub oracle_d_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub methods: Vec<MethodReplicate>,
    pub diagnostics: Option<DiagnosticsSummary>,
}

impl ReplicateResult {
    pub fn method(&self, m: Method) -> Option<&MethodReplicate> {
        self.methods.iter().find(|r| r.method == m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_d_hat: f64,
    pub sd_d_hat: f64,
    pub mean_d_tilde: f64,
    /// mean_d_tilde - mean_d_hat.
    pub bias: f64,
    pub mean_p_null_less: f64,
    pub mean_p_oracle_less: f64,
    pub mean_oracle_d_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioConfig,
    pub sampler: SamplerConfig,
    pub methods: Vec<Method>,
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<MethodSummary>,
}

fn d_hat(rep: &Replicate, e: &ErrorDistribution) -> f64 {
    let total: f64 = e
        .trials
        .iter()
        .zip(&e.loo_point)
        .map(|(t, p)| (rep.true_t2_of(t).expect("generated trial") - p).abs())
        .sum();
    total / e.trials.len() as f64
}

fn score(
    method: Method,
    rep: &Replicate,
    k: &ErrorDistribution,
    l: &ErrorDistribution,
    null: &ErrorDistribution,
    n_pairs: usize,
) -> Result<MethodReplicate, SimError> {
    Ok(MethodReplicate {
        method,
        d_hat: d_hat(rep, k),
        d_tilde_mean: k.trial_average(),
        p_null_less: compare(null, k, n_pairs, rep.seed)?.probability,
        p_oracle_less: compare(l, k, n_pairs, rep.seed)?.probability,
        oracle_d_hat: d_hat(rep, l),
    })
}

/// Fit results consumed in job order.
struct Queue(std::vec::IntoIter<FitResult>);

impl Queue {
    fn full(&mut self) -> PosteriorDraws {
        self.0.next().expect("job order").into_full()
    }

    fn refits(&mut self, n: usize) -> Vec<Refit> {
        self.0.by_ref().take(n).map(FitResult::into_refit).collect()
    }
}

/// Fits behind one replicate, run in sequence on the calling worker.
fn run_replicate(
    rep: &Replicate,
    methods: &[Method],
    sampler: &SamplerConfig,
    options: &SimOptions,
) -> Result<ReplicateResult, SimError> {
    let data = &rep.dataset;
    let trials: Vec<&str> = rep.trials.iter().map(String::as_str).collect();
    let config = sampler.with_seed(rep.seed);
    let inner = CvOptions {
        workers: 1,
        ..CvOptions::default()
    };
    let has = |m: Method| methods.contains(&m);
    let new_model = &options.model;
    let dh_model = dh_spec(&options.dh_priors);
    let one = |c: &str| [c.to_string()];

    // job order: new full k, null loo, [new full l, new loo k, new loo l], [dh ...]
    let mut jobs = vec![FitJob::full("full", CANDIDATE, new_model.with_mode(Mode::Full, &one(CANDIDATE)))];
    jobs.extend(cv::null_jobs("null_loo", &trials, &new_model.with_mode(Mode::Null, &[])));
    if has(Method::New) {
        jobs.push(FitJob::full("full", ORACLE, new_model.with_mode(Mode::Full, &one(ORACLE))));
        jobs.extend(cv::candidate_jobs("loo", &trials, CANDIDATE, new_model));
        jobs.extend(cv::candidate_jobs("loo", &trials, ORACLE, new_model));
    }
    if has(Method::Dh) {
        for c in [CANDIDATE, ORACLE] {
            jobs.push(FitJob::full("dh_full", c, dh_model.with_mode(Mode::Full, &one(c))));
            jobs.extend(cv::candidate_jobs("dh_loo", &trials, c, &dh_model));
        }
    }
    let results = cv::run_fit_jobs(data, &jobs, &config, &inner)?;
    let diagnostics = {
        let mut fulls = Vec::new();
        let mut refits = Vec::new();
        for r in &results {
            match r {
                FitResult::Full(d) => fulls.extend(summarize(d)),
                FitResult::Refit(r) => refits.extend(r.diagnostics.clone()),
            }
        }
        worst(fulls.iter().chain(&refits))
    };
    let mut queue = Queue(results.into_iter());
    let j = trials.len();
    let mix = MixtureOptions {
        seed: rep.seed,
        ..MixtureOptions::default()
    };
    let mut out = Vec::new();
    let full_k = queue.full();
    let null_loo = queue.refits(j);
    let null_new = error_distribution(&full_k, &null_loo, "new:null", &mix)?;
    if has(Method::New) {
        let full_l = queue.full();
        let loo_k = queue.refits(j);
        let loo_l = queue.refits(j);
        let k = error_distribution(&full_k, &loo_k, "new:k", &mix)?;
        let l = error_distribution(&full_l, &loo_l, "new:l", &mix)?;
        out.push(score(Method::New, rep, &k, &l, &null_new, options.n_pairs)?);
    }
    if has(Method::Dh) {
        let dh_k = queue.full();
        let loo_k = queue.refits(j);
        let dh_l = queue.full();
        let loo_l = queue.refits(j);
        let k = error_distribution(&dh_k, &loo_k, "dh:k", &mix)?;
        let l = error_distribution(&dh_l, &loo_l, "dh:l", &mix)?;
        let null = error_distribution(&dh_k, &null_loo, "dh:null", &mix)?;
        out.push(score(Method::Dh, rep, &k, &l, &null, options.n_pairs)?);
    }
    if has(Method::Ols) {
        let k = ols_loo(data, CANDIDATE, options.ols_draws, rep.seed)?;
        let l = ols_loo(data, ORACLE, options.ols_draws, rep.seed)?;
        out.push(score(Method::Ols, rep, &k, &l, &null_new, options.n_pairs)?);
    }
    out.sort_by_key(|m| m.method);
    Ok(ReplicateResult {
        replicate: rep.index,
        seed: rep.seed,
        methods: out,
        diagnostics,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize_method(m: Method, reps: &[ReplicateResult]) -> MethodSummary {
    let rows: Vec<&MethodReplicate> = reps.iter().filter_map(|r| r.method(m)).collect();
    let col = |f: fn(&MethodReplicate) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let d = col(|r| r.d_hat);
    let mean_d_hat = mean(&d);
    let sd_d_hat = if d.len() > 1 {
        (d.iter().map(|v| (v - mean_d_hat).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mean_d_tilde = mean(&col(|r| r.d_tilde_mean));
    MethodSummary {
        method: m,
        mean_d_hat,
        sd_d_hat,
        mean_d_tilde,
        bias: mean_d_tilde - mean_d_hat,
        mean_p_null_less: mean(&col(|r| r.p_null_less)),
        mean_p_oracle_less: mean(&col(|r| r.p_oracle_less)),
        mean_oracle_d_hat: mean(&col(|r| r.oracle_d_hat)),
    }
}

/// Generate every replicate of `config`, score `methods` on each, and
/// aggregate. Replicates run in parallel on `options.workers` threads; the
/// report does not depend on the worker count.
pub fn run_scenario(
    config: &ScenarioConfig,
    methods: &[Method],
    sampler: &SamplerConfig,
    options: &SimOptions,
) -> Result<ScenarioReport, SimError> {
    config.validate()?;
    if methods.is_empty() {
        return Err(SimError::Config("no methods selected".into()));
    }
    sampler.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let replicates = cv::run_jobs(options.workers, config.n_replicates, |r| {
        let rep = generate_replicate(config, r)?;
        run_replicate(&rep, &methods, sampler, options)
    })?
    .into_iter()
    .collect::<Result<Vec<_>, SimError>>()?;
    let summary = methods.iter().map(|&m| summarize_method(m, &replicates)).collect();
    Ok(ScenarioReport {
        scenario: config.clone(),
        sampler: sampler.clone(),
        methods,
        replicates,
        summary,
    })
}

fn io(e: impl std::fmt::Display) -> SimError {
    SimError::Io(e.to_string())
}

impl ScenarioReport {
    pub fn summary_for(&self, m: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == m)
    }

    /// Fraction of replicates where `pred` holds.
    pub fn fraction(&self, pred: impl Fn(&ReplicateResult) -> bool) -> f64 {
        self.replicates.iter().filter(|r| pred(r)).count() as f64 / self.replicates.len() as f64
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.diagnostics().map(|d| d.max_rhat)
    }

    /// Worst R-hat and ESS over every replicate's fits.
    pub fn diagnostics(&self) -> Option<DiagnosticsSummary> {
        worst(self.replicates.iter().filter_map(|r| r.diagnostics.as_ref()))
    }

    /// One row per (replicate, method).
    pub fn write_replicates_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario", "replicate", "seed", "method", "d_hat", "d_tilde_mean", "p_null_less",
            "p_oracle_less", "oracle_d_hat",
        ])
        .map_err(io)?;
        for r in &self.replicates {
            for m in &r.methods {
                w.write_record([
                    self.scenario.id.clone(),
                    r.replicate.to_string(),
                    r.seed.to_string(),
                    m.method.name().to_string(),
                    m.d_hat.to_string(),
                    m.d_tilde_mean.to_string(),
                    m.p_null_less.to_string(),
                    m.p_oracle_less.to_string(),
                    m.oracle_d_hat.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "scenario", "method", "replicates", "mean_d_hat", "sd_d_hat", "mean_d_tilde", "bias",
            "mean_p_null_less", "mean_p_oracle_less", "mean_oracle_d_hat",
        ])
        .map_err(io)?;
        for s in &self.summary {
            w.write_record([
                self.scenario.id.clone(),
                s.method.name().to_string(),
                self.replicates.len().to_string(),
                s.mean_d_hat.to_string(),
                s.sd_d_hat.to_string(),
                s.mean_d_tilde.to_string(),
                s.bias.to_string(),
                s.mean_p_null_less.to_string(),
                s.mean_p_oracle_less.to_string(),
                s.mean_oracle_d_hat.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Aligned text table, methods as columns, with the constants footnote.
    pub fn text_table(&self) -> String {
        let mut rows: Vec<(String, Vec<String>)> = vec![
            ("mean D-hat (SD)".into(), Vec::new()),
            ("mean E[D-tilde]".into(), Vec::new()),
            ("bias".into(), Vec::new()),
            ("P(D0 < Dk)".into(), Vec::new()),
            ("P(Dl < Dk)".into(), Vec::new()),
            ("oracle D-hat".into(), Vec::new()),
        ];
        for s in &self.summary {
            let cells = [
                format!("{:.3} ({:.3})", s.mean_d_hat, s.sd_d_hat),
                format!("{:.3}", s.mean_d_tilde),
                format!("{:.3}", s.bias),
                format!("{:.3}", s.mean_p_null_less),
                format!("{:.3}", s.mean_p_oracle_less),
                format!("{:.3}", s.mean_oracle_d_hat),
            ];
            for (row, c) in rows.iter_mut().zip(cells) {
                row.1.push(c);
            }
        }
        let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let col_w = rows
            .iter()
            .flat_map(|r| r.1.iter().map(String::len))
            .chain(self.summary.iter().map(|s| s.method.name().len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "scenario {} ({}), {} trials, {} replicates",
            self.scenario.id,
            self.scenario.name,
            self.scenario.n_trials,
            self.replicates.len()
        );
        let _ = write!(out, "{:label_w$}", "");
        for s in &self.summary {
            let _ = write!(out, "  {:>col_w$}", s.method.name());
        }
        out.push('\n');
        for (label, cells) in &rows {
            let _ = write!(out, "{label:label_w$}");
            for c in cells {
                let _ = write!(out, "  {c:>col_w$}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "sampler: {} chains, {} burn-in, {} draws, seed {}",
            self.sampler.chains, self.sampler.burn_in, self.sampler.draws, self.sampler.seed
        );
        let _ = writeln!(out, "{}", self.scenario.footnote());
        out
    }
}
