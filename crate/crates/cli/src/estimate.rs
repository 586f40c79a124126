use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use tlgs::data::io::{read_subjects, subject_markers, write_summaries};
use tlgs::data::{estimate_effect, DataError, EstimateOptions, Family, SubjectRecord, CLINICAL};

use crate::error::CliError;
use crate::manifest::Run;
use crate::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    GaussianIdentity,
    PoissonLogOffset,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::GaussianIdentity => Family::GaussianIdentity,
            FamilyArg::PoissonLogOffset => Family::PoissonLogOffset,
        }
    }
}

/// Estimate per-trial treatment effects of the clinical outcome and each
/// marker from subject-level data.
#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Subject CSV: trial_id,arm,exposure,outcome,<marker>...
    #[arg(long)]
    pub subjects: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Markers to estimate (default: every marker column).
    #[arg(long, value_delimiter = ',')]
    pub markers: Vec<String>,
    #[arg(long, value_enum, default_value = "poisson-log-offset")]
    pub clinical_family: FamilyArg,
    #[arg(long, value_enum, default_value = "gaussian-identity")]
    pub marker_family: FamilyArg,
    /// Add 0.5 events per arm when an arm has none.
    #[arg(long)]
    pub continuity_correction: bool,
}

#[derive(Serialize)]
struct EstimateConfig<'a> {
    markers: &'a [String],
    clinical_family: FamilyArg,
    marker_family: FamilyArg,
    continuity_correction: bool,
}

pub fn run(args: EstimateArgs, workers: usize) -> Result<Status, CliError> {
    let bytes = std::fs::read(&args.subjects).map_err(|e| CliError::io(&args.subjects, e))?;
    let available = subject_markers(&bytes[..])?;
    let markers = if args.markers.is_empty() {
        available.clone()
    } else {
        if let Some(m) = args.markers.iter().find(|m| !available.contains(m)) {
            return Err(CliError::Config(format!("marker {m:?} is not a column of the subject file")));
        }
        args.markers.clone()
    };
    let config = EstimateConfig {
        markers: &markers,
        clinical_family: args.clinical_family,
        marker_family: args.marker_family,
        continuity_correction: args.continuity_correction,
    };
    let mut run = Run::new("estimate", &args.out, &config, workers)?;
    run.input(&args.subjects)?;
    let records = read_subjects(&bytes[..])?;
    let options = EstimateOptions {
        continuity_correction: args.continuity_correction,
        ..Default::default()
    };

    let mut trials: Vec<(String, Vec<SubjectRecord>)> = Vec::new();
    for r in records {
        match trials.iter_mut().find(|(id, _)| *id == r.trial_id) {
            Some((_, v)) => v.push(r),
            None => trials.push((r.trial_id.clone(), vec![r])),
        }
    }
    let (mut rows, mut total, mut numerical) = (Vec::new(), 0, false);
    for (trial, recs) in &trials {
        let mut responses = Vec::new();
        if recs.iter().any(|r| r.outcome.is_some()) {
            responses.push((CLINICAL, args.clinical_family));
        }
        for m in &markers {
            if recs.iter().any(|r| r.markers.contains_key(m)) {
                responses.push((m.as_str(), args.marker_family));
            }
        }
        for (response, family) in responses {
            total += 1;
            match estimate_effect(recs, response, family.into(), &options) {
                Ok(s) => rows.push(s),
                Err(e) => {
                    numerical |= matches!(e, DataError::NonConvergence { .. });
                    let msg = format!("trial {trial}, response {response}: {e}");
                    eprintln!("estimate failed: {msg}");
                    run.warnings.push(msg);
                }
            }
        }
    }
    let mut out = Vec::new();
    write_summaries(&mut out, &rows)?;
    run.write("summaries.csv", &out)?;
    let failed = run.warnings.len();
    run.finish()?;
    if failed > 0 {
        return Err(CliError::Estimates {
            failed,
            total,
            numerical,
        });
    }
    Ok(Status::Ok)
}
