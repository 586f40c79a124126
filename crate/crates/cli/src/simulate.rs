use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use tlgs::data::io::write_subjects;
use tlgs::sim::{self, example_subjects, run_scenario, Method, ScenarioConfig, SimOptions, EXAMPLE_MARKERS};

use crate::config::{RunArgs, RunConfig};
use crate::error::CliError;
use crate::manifest::Run;
use crate::{Status, RHAT_LIMIT};

/// Preset whose constants shape the example subject fixture.
const EXAMPLE_PRESET: &str = "13";

/// Run a simulation scenario, or write the example subject fixture.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Packaged preset id.
    #[arg(long, conflicts_with_all = ["scenario_file", "example"])]
    pub scenario: Option<String>,
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "example")]
    pub scenario_file: Option<PathBuf>,
    /// Methods to score.
    #[arg(long, value_delimiter = ',', default_value = "new,dh,ols")]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Write subject-level example data (subjects.csv, truth.csv) instead.
    #[arg(long)]
    pub example: bool,
    /// With --example, add one more trial that has markers only.
    #[arg(long, requires = "example")]
    pub held_out: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    scenario: &'a ScenarioConfig,
    methods: &'a [Method],
    #[serde(flatten)]
    run: &'a RunConfig,
}

pub fn run(args: SimulateArgs, workers: usize) -> Result<Status, CliError> {
    if args.example {
        return example(args, workers);
    }
    let cfg = args.run.resolve()?;
    let mut scenario = match (&args.scenario, &args.scenario_file) {
        (Some(id), None) => sim::preset(id)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        _ => return Err(CliError::Config("give --scenario or --scenario-file".into())),
    };
    if let Some(r) = args.replicates {
        scenario.n_replicates = r;
    }
    if let Some(t) = args.trials {
        scenario.n_trials = t;
    }
    scenario.validate()?;
    let mut methods = args.methods.clone();
    methods.sort();
    methods.dedup();
    let config = SimulateConfig {
        scenario: &scenario,
        methods: &methods,
        run: &cfg,
    };
    let mut run = Run::new("simulate", &args.out, &config, workers)?;
    if let Some(path) = &args.scenario_file {
        run.input(path)?;
    }
    run.seed("scenario", scenario.seed);
    run.seed("sampler", cfg.sampler.seed);

    let options = SimOptions {
        workers: 0,
        n_pairs: cfg.n_pairs,
        ols_draws: cfg.ols_draws,
        dh_priors: cfg.dh_priors.clone(),
        model: cfg.model.clone(),
    };
    let report = run_scenario(&scenario, &methods, &cfg.sampler, &options)?;
    run.diagnostics = report.diagnostics();
    let soft = methods.iter().any(|m| *m != Method::Ols) && run.check_rhat(RHAT_LIMIT);

    let mut buf = Vec::new();
    report.write_replicates_csv(&mut buf)?;
    run.write("replicates.csv", &buf)?;
    buf.clear();
    report.write_summary_csv(&mut buf)?;
    run.write("summary.csv", &buf)?;
    run.write("table.txt", report.text_table().as_bytes())?;
    let warnings = run.warnings.clone();
    run.finish()?;
    Ok(if soft { Status::SoftFail(warnings) } else { Status::Ok })
}

#[derive(Serialize)]
struct ExampleConfig {
    seed: u64,
    n_trials: usize,
    held_out: bool,
}

fn example(args: SimulateArgs, workers: usize) -> Result<Status, CliError> {
    let preset = sim::preset(EXAMPLE_PRESET)?;
    let n_trials = args.trials.unwrap_or(preset.n_trials);
    if n_trials < 3 {
        return Err(CliError::Config(format!("need at least 3 trials, got {n_trials}")));
    }
    let config = ExampleConfig {
        seed: args.run.seed.unwrap_or(preset.seed),
        n_trials: n_trials + usize::from(args.held_out),
        held_out: args.held_out,
    };
    let mut run = Run::new("simulate", &args.out, &config, workers)?;
    run.seed("example", config.seed);
    let fixture = example_subjects(config.seed, config.n_trials, config.held_out)?;
    let markers: Vec<String> = EXAMPLE_MARKERS.iter().map(|m| m.to_string()).collect();
    let mut buf = Vec::new();
    write_subjects(&mut buf, &markers, &fixture.records)?;
    run.write("subjects.csv", &buf)?;
    buf = b"trial_id,t1_iga,t1_g1,t2\n".to_vec();
    for t in &fixture.truth {
        buf.extend(format!("{},{},{},{}\n", t.trial, t.t1_iga, t.t1_g1, t.t2).bytes());
    }
    run.write("truth.csv", &buf)?;
    run.finish()?;
    Ok(Status::Ok)
}
