use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tlgs::cv::{self, compare, rank_candidates, ErrorDistribution, RankReport, NULL_LABEL};
use tlgs::data::assemble_dataset;
use tlgs::data::io::read_summaries;
use tlgs::mcmc::DiagnosticsSummary;

use crate::config::{RunArgs, RunConfig};
use crate::error::CliError;
use crate::manifest::{sha256_hex, Run};
use crate::{Status, RHAT_LIMIT};

pub const ERRORS_FILE: &str = "errors.json";

/// Cross-validate candidates against the null model and rank them.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trial-summary CSV: trial_id,candidate_id,effect_hat,se_hat[,rho]
    #[arg(long)]
    pub summaries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Candidates to evaluate (default: all; pass "none" for the null only).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<String>,
    /// Reuse error distributions of identical earlier runs from this directory.
    #[arg(long, env = "TLGS_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Re-render the report of an evaluate output directory.
#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an earlier evaluate run.
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// P(D̃a < D̃b) between two error distributions of an evaluate run.
#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Output directory of an earlier evaluate run.
    #[arg(long)]
    pub run_dir: PathBuf,
    /// Label of the first distribution (a candidate or "null").
    pub a: String,
    pub b: String,
    #[arg(long)]
    pub n_pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write comparison.json and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error distribution reduced to what ranking and comparison read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedError {
    pub label: String,
    pub trials: Vec<String>,
    pub loo_point: Vec<f64>,
    /// Per-trial mean error.
    pub trial_mean: Vec<f64>,
    pub mixture: Vec<f64>,
}

impl SavedError {
    fn from_distribution(e: &ErrorDistribution) -> Self {
        Self {
            label: e.label.clone(),
            trials: e.trials.clone(),
            loo_point: e.loo_point.clone(),
            trial_mean: e
                .per_trial
                .iter()
                .map(|d| d.iter().sum::<f64>() / d.len() as f64)
                .collect(),
            mixture: e.mixture.clone(),
        }
    }

    fn distribution(&self) -> ErrorDistribution {
        ErrorDistribution {
            label: self.label.clone(),
            trials: self.trials.clone(),
            loo_point: self.loo_point.clone(),
            per_trial: Vec::new(),
            mixture: self.mixture.clone(),
            mixture_trial: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedErrors {
    pub seed: u64,
    pub n_pairs: usize,
    pub n_fits: usize,
    pub diagnostics: Option<DiagnosticsSummary>,
    pub candidates: Vec<SavedError>,
    pub null: SavedError,
}

impl SavedErrors {
    pub fn load(dir: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let path = dir.join(ERRORS_FILE);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let saved = serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok((saved, bytes))
    }

    fn find(&self, label: &str) -> Option<&SavedError> {
        self.candidates.iter().chain(std::iter::once(&self.null)).find(|e| e.label == label)
    }
}

#[derive(Serialize)]
struct EvaluateConfig<'a> {
    candidates: &'a [String],
    #[serde(flatten)]
    run: &'a RunConfig,
}

pub fn run(args: EvaluateArgs, workers: usize) -> Result<Status, CliError> {
    let cfg = args.run.resolve()?;
    let bytes = std::fs::read(&args.summaries).map_err(|e| CliError::io(&args.summaries, e))?;
    let dataset = assemble_dataset(&read_summaries(&bytes[..])?)?;
    let candidates: Vec<String> = match args.candidates.as_slice() {
        [] => dataset.candidates().to_vec(),
        [none] if none == "none" => Vec::new(),
        list => list.to_vec(),
    };
    if let Some(c) = candidates.iter().find(|c| !dataset.candidates().contains(c)) {
        return Err(CliError::Config(format!("candidate {c:?} has no rows in the summaries")));
    }
    let config = EvaluateConfig {
        candidates: &candidates,
        run: &cfg,
    };
    let mut run = Run::new("evaluate", &args.out, &config, workers)?;
    run.input(&args.summaries)?;
    run.seed("sampler", cfg.sampler.seed);

    let cache = args.cache_dir.as_ref().map(|dir| {
        let key_src = serde_json::to_vec(&config).expect("config serializes");
        let key = sha256_hex(&[env!("CARGO_PKG_VERSION").as_bytes(), &bytes, &key_src].concat());
        dir.join(format!("evaluate-{key}.json"))
    });
    let cached = cache
        .as_ref()
        .and_then(|p| std::fs::read(p).ok())
        .and_then(|b| serde_json::from_slice::<SavedErrors>(&b).ok());
    let saved = match cached {
        Some(s) => {
            run.cache_hit = true;
            s
        }
        None => {
            let ev = cv::evaluate(
                &dataset,
                &candidates,
                &cfg.model,
                &cfg.null_model,
                &cfg.sampler,
                &cfg.cv,
                cfg.n_pairs,
            )?;
            let saved = SavedErrors {
                seed: cfg.sampler.seed,
                n_pairs: cfg.n_pairs,
                n_fits: ev.n_fits,
                diagnostics: ev.diagnostics,
                candidates: ev.errors.iter().map(SavedError::from_distribution).collect(),
                null: SavedError::from_distribution(&ev.null),
            };
            if let Some(p) = &cache {
                store_cache(p, &saved);
            }
            saved
        }
    };
    run.diagnostics = saved.diagnostics.clone();
    let soft = run.check_rhat(RHAT_LIMIT);
    run.write_json(ERRORS_FILE, &saved)?;
    render(&mut run, &saved, saved.n_pairs, saved.seed)?;
    finish(run, soft)
}

fn store_cache(path: &Path, saved: &SavedErrors) {
    // a failed cache write only costs a refit next time
    let write = || -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(saved)?)?;
        std::fs::rename(&tmp, path)
    };
    if let Err(e) = write() {
        eprintln!("warning: cache write to {} failed: {e}", path.display());
    }
}

pub fn report(args: ReportArgs, workers: usize) -> Result<Status, CliError> {
    let (saved, _) = SavedErrors::load(&args.run_dir)?;
    let n_pairs = args.n_pairs.unwrap_or(saved.n_pairs);
    let seed = args.seed.unwrap_or(saved.seed);
    if n_pairs == 0 {
        return Err(CliError::Config("n_pairs must be positive".into()));
    }
    let config = serde_json::json!({ "n_pairs": n_pairs, "seed": seed });
    let mut run = Run::new("report", &args.out, &config, workers)?;
    run.input(&args.run_dir.join(ERRORS_FILE))?;
    run.seed("compare", seed);
    run.diagnostics = saved.diagnostics.clone();
    let soft = run.check_rhat(RHAT_LIMIT);
    render(&mut run, &saved, n_pairs, seed)?;
    finish(run, soft)
}

fn finish(run: Run, soft: bool) -> Result<Status, CliError> {
    let warnings = run.warnings.clone();
    run.finish()?;
    Ok(if soft { Status::SoftFail(warnings) } else { Status::Ok })
}

/// summary.csv, pairwise.csv, densities.json and report.txt.
fn render(run: &mut Run, saved: &SavedErrors, n_pairs: usize, seed: u64) -> Result<(), CliError> {
    let errors: Vec<ErrorDistribution> = saved.candidates.iter().map(SavedError::distribution).collect();
    let report = rank_candidates(&errors, &saved.null.distribution(), n_pairs, seed)?;
    let mut buf = Vec::new();
    report.write_summary_csv(&mut buf).map_err(|e| CliError::io("summary.csv", e))?;
    run.write("summary.csv", &buf)?;
    buf.clear();
    report.write_pairwise_csv(&mut buf).map_err(|e| CliError::io("pairwise.csv", e))?;
    run.write("pairwise.csv", &buf)?;
    run.write_json("densities.json", &report.densities)?;
    run.write("report.txt", text_report(&report, saved).as_bytes())
}

fn text_report(report: &RankReport, saved: &SavedErrors) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>10} {:>10} {:>12}", "candidate", "E[D]", "95th pct", "P(D0<Dk)");
    for r in &report.rows {
        let p = r.p_null_less.map_or("-".to_string(), |c| format!("{:.3}", c.probability));
        let _ = writeln!(s, "{:<16} {:>10.4} {:>10.4} {:>12}", r.candidate, r.mean, r.p95, p);
    }
    if !report.pairwise.is_empty() {
        let _ = writeln!(s, "\npairwise P(Da<Db)");
        for p in &report.pairwise {
            let _ = writeln!(s, "  {} vs {}: {:.3}", p.a, p.b, p.comparison.probability);
        }
    }
    let _ = writeln!(s, "\n{} trials, {} fits", saved.null.trials.len(), saved.n_fits);
    if let Some(d) = &saved.diagnostics {
        let _ = writeln!(
            s,
            "max R-hat {:.3} ({}), min ESS {:.0} ({})",
            d.max_rhat, d.max_rhat_column, d.min_ess, d.min_ess_column
        );
    }
    s
}

#[derive(Serialize)]
struct CompareOut<'a> {
    a: &'a str,
    b: &'a str,
    probability: f64,
    mcse: f64,
    n_pairs: usize,
    seed: u64,
}

pub fn compare_cmd(args: CompareArgs, workers: usize) -> Result<Status, CliError> {
    let (saved, _) = SavedErrors::load(&args.run_dir)?;
    let n_pairs = args.n_pairs.unwrap_or(saved.n_pairs);
    let seed = args.seed.unwrap_or(saved.seed);
    let get = |label: &str| {
        saved.find(label).map(SavedError::distribution).ok_or_else(|| {
            let mut known: Vec<&str> = saved.candidates.iter().map(|e| e.label.as_str()).collect();
            known.push(NULL_LABEL);
            CliError::Config(format!("no error distribution {label:?}; known: {}", known.join(", ")))
        })
    };
    let (a, b) = (get(&args.a)?, get(&args.b)?);
    if n_pairs == 0 {
        return Err(CliError::Config("n_pairs must be positive".into()));
    }
    let c = compare(&a, &b, n_pairs, seed)?;
    let out = CompareOut {
        a: &args.a,
        b: &args.b,
        probability: c.probability,
        mcse: c.mcse,
        n_pairs,
        seed,
    };
    println!("{}", serde_json::to_string(&out).map_err(|e| CliError::Config(e.to_string()))?);
    if let Some(dir) = &args.out {
        let config = serde_json::json!({ "a": args.a, "b": args.b, "n_pairs": n_pairs, "seed": seed });
        let mut run = Run::new("compare", dir, &config, workers)?;
        run.input(&args.run_dir.join(ERRORS_FILE))?;
        run.seed("compare", seed);
        run.write_json("comparison.json", &out)?;
        run.finish()?;
    }
    Ok(Status::Ok)
}
