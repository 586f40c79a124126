//! Subject data through effect estimation, evaluation and prediction, using
//! only the public API.

use tlgs::cv::{self, compare, fit_and_predict, vaccine_efficacy, CvOptions};
use tlgs::data::io::{read_summaries, write_summaries};
use tlgs::data::{assemble_dataset, estimate_effect, EstimateOptions, Family, Link, SubjectRecord, TrialSummary, CLINICAL};
use tlgs::mcmc::SamplerConfig;
use tlgs::model::{Mode, ModelSpec};
use tlgs::sim::{example_subjects, ExampleFixture, EXAMPLE_MARKERS};

fn sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: 2,
        burn_in: 500,
        draws: 500,
        seed,
        ..SamplerConfig::default()
    }
}

fn summaries(fixture: &ExampleFixture) -> Vec<TrialSummary> {
    let opts = EstimateOptions::default();
    let mut out = Vec::new();
    for t in &fixture.truth {
        let recs: Vec<SubjectRecord> = fixture.records.iter().filter(|r| r.trial_id == t.trial).cloned().collect();
        if recs.iter().any(|r| r.outcome.is_some()) {
            out.push(estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &opts).unwrap());
        }
        for m in EXAMPLE_MARKERS {
            out.push(estimate_effect(&recs, m, Family::GaussianIdentity, &opts).unwrap());
        }
    }
    out
}

#[test]
fn estimated_summaries_round_trip_and_rank_the_true_surrogate() {
    let fixture = example_subjects(5, 10, false).unwrap();
    let rows = summaries(&fixture);
    let mut buf = Vec::new();
    write_summaries(&mut buf, &rows).unwrap();
    assert_eq!(read_summaries(buf.as_slice()).unwrap(), rows);

    let data = assemble_dataset(&rows).unwrap();
    let candidates = vec!["iga".to_string()];
    let ev = cv::evaluate(
        &data,
        &candidates,
        &ModelSpec::new(Mode::Full, &candidates),
        &ModelSpec::new(Mode::Null, &[]),
        &sampler(3),
        &CvOptions::default(),
        5000,
    )
    .unwrap();
    let iga = &ev.errors[0];
    assert_eq!(iga.trials.len(), 10);
    assert!(iga.mean() < ev.null.mean(), "iga {} vs null {}", iga.mean(), ev.null.mean());
    let p = ev.report.rows[0].p_null_less.as_ref().unwrap().probability;
    assert!(p < 0.5, "P(D0 < Diga) = {p}");
    let ab = compare(iga, &ev.null, 5000, 9).unwrap().probability;
    let ba = compare(&ev.null, iga, 5000, 9).unwrap().probability;
    assert_eq!(ab + ba, 1.0);
}

#[test]
fn held_out_trial_prediction_covers_its_truth() {
    let fixture = example_subjects(11, 13, true).unwrap();
    let rows = summaries(&fixture);
    let data = assemble_dataset(&rows).unwrap();
    let held = fixture.truth.last().unwrap();
    assert!(!data.evaluation_trials().contains(&held.trial.as_str()));

    let candidates = vec!["iga".to_string()];
    let (pred, _) = fit_and_predict(
        &data,
        &candidates,
        &ModelSpec::new(Mode::Full, &candidates),
        &sampler(4),
        &held.trial,
        Some(Link::Log),
    )
    .unwrap();
    assert!(pred.ci95.lo < held.t2 && held.t2 < pred.ci95.hi, "{:?} vs {}", pred.ci95, held.t2);
    let ve = pred.efficacy.unwrap();
    // VE is decreasing in T2, so its interval mirrors the effect interval
    assert!((ve.ci95.lo - vaccine_efficacy(pred.ci95.hi)).abs() < 0.05);
    assert!((ve.ci95.hi - vaccine_efficacy(pred.ci95.lo)).abs() < 0.05);
}
