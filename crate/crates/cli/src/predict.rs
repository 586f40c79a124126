use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use tlgs::cv::{fit_and_predict, PredictionResult};
use tlgs::data::io::{read_characteristics, read_summaries};
use tlgs::data::{assemble_dataset, classify_generalizability, Link, Support};
use tlgs::mcmc::diagnostics;

use crate::config::{RunArgs, RunConfig};
use crate::error::CliError;
use crate::manifest::Run;
use crate::{Status, RHAT_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LinkArg {
    Identity,
    Log,
}

impl From<LinkArg> for Link {
    fn from(l: LinkArg) -> Self {
        match l {
            LinkArg::Identity => Link::Identity,
            LinkArg::Log => Link::Log,
        }
    }
}

/// Predict the clinical effect of a trial that has candidate rows only.
#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trial-summary CSV including the new trial's candidate rows.
    #[arg(long)]
    pub summaries: PathBuf,
    /// Id of the new trial.
    #[arg(long)]
    pub trial: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Candidates to condition on (default: every candidate of the new trial).
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<String>,
    /// Link of the clinical effect; log adds the efficacy scale 1 - exp(T2).
    #[arg(long, value_enum, default_value = "log")]
    pub link: LinkArg,
    /// JSON map of trial characteristics, to classify how well the
    /// evaluation trials support the new setting.
    #[arg(long)]
    pub characteristics: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Serialize)]
struct PredictConfig<'a> {
    trial: &'a str,
    candidates: &'a [String],
    link: LinkArg,
    #[serde(flatten)]
    run: &'a RunConfig,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    #[serde(flatten)]
    result: &'a PredictionResult,
    candidates: &'a [String],
    link: LinkArg,
    support: Option<Support>,
}

pub fn run(args: PredictArgs, workers: usize) -> Result<Status, CliError> {
    let cfg = args.run.resolve()?;
    let bytes = std::fs::read(&args.summaries).map_err(|e| CliError::io(&args.summaries, e))?;
    let dataset = assemble_dataset(&read_summaries(&bytes[..])?)?;
    let entry = dataset
        .trial(&args.trial)
        .ok_or_else(|| CliError::Config(format!("trial {:?} is not in the summaries", args.trial)))?;
    let candidates: Vec<String> = if args.candidates.is_empty() {
        entry.candidates.keys().cloned().collect()
    } else {
        args.candidates.clone()
    };
    if candidates.is_empty() {
        return Err(CliError::Config(format!("trial {:?} has no candidate rows", args.trial)));
    }
    if let Some(c) = candidates.iter().find(|c| !entry.candidates.contains_key(*c)) {
        return Err(CliError::Config(format!("trial {:?} has no row for candidate {c:?}", args.trial)));
    }
    let config = PredictConfig {
        trial: &args.trial,
        candidates: &candidates,
        link: args.link,
        run: &cfg,
    };
    let mut run = Run::new("predict", &args.out, &config, workers)?;
    run.input(&args.summaries)?;
    run.seed("sampler", cfg.sampler.seed);

    let support = match &args.characteristics {
        Some(path) => {
            let chars = read_characteristics(&run.input(path)?[..])?;
            let new = chars
                .iter()
                .find(|c| c.trial_id == args.trial)
                .ok_or_else(|| CliError::Config(format!("no characteristics for trial {:?}", args.trial)))?;
            let evaluation: Vec<_> = dataset
                .evaluation_trials()
                .into_iter()
                .filter_map(|t| chars.iter().find(|c| c.trial_id == t).cloned())
                .collect();
            Some(classify_generalizability(new, &evaluation)?)
        }
        None => None,
    };

    let (result, draws) = fit_and_predict(
        &dataset,
        &candidates,
        &cfg.model,
        &cfg.sampler,
        &args.trial,
        Some(args.link.into()),
    )?;
    run.diagnostics = diagnostics(&draws).ok().map(|d| d.summary());
    let soft = run.check_rhat(RHAT_LIMIT);
    run.write_json(
        "prediction.json",
        &PredictionOut {
            result: &result,
            candidates: &candidates,
            link: args.link,
            support,
        },
    )?;
    let warnings = run.warnings.clone();
    run.finish()?;
    Ok(if soft { Status::SoftFail(warnings) } else { Status::Ok })
}
