//! Subject-level example data shaped like a multi-site vaccine programme:
//! a Poisson clinical endpoint with exposure time and two immune markers
//! measured on a random subsample.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::SimError;
use crate::data::SubjectRecord;
use crate::mcmc::{dist, rng};

pub const EXAMPLE_MARKERS: [&str; 2] = ["iga", "g1"];

const SUBJECTS_PER_ARM: usize = 600;
const MARKER_FRACTION: f64 = 0.25;
const MARKER_SD: f64 = 1.2;
const PLACEBO_RATE: f64 = 0.1;

/// True effects of one generated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleTruth {
    pub trial: String,
    pub t1_iga: f64,
    pub t1_g1: f64,
    /// Log rate ratio, vaccinated vs placebo.
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleFixture {
    pub records: Vec<SubjectRecord>,
    pub truth: Vec<ExampleTruth>,
}

/// `n_trials` trials with T1_iga ~ N(2, 1), T2 = -0.3 - 0.6 T1_iga + N(0, 0.15²)
/// and T1_g1 = 0.5 + 0.8 T1_iga + N(0, 0.4²). With `held_out`, the last
/// trial carries markers only (no outcome or exposure).
pub fn example_subjects(seed: u64, n_trials: usize, held_out: bool) -> Result<ExampleFixture, SimError> {
    let mut g = rng::stream(seed, &[rng::label_tag("example")]);
    let mut records = Vec::with_capacity(n_trials * 2 * SUBJECTS_PER_ARM);
    let mut truth = Vec::with_capacity(n_trials);
    for j in 0..n_trials {
        let trial = format!("site{:02}", j + 1);
        let t1_iga = dist::normal(&mut g, 2.0, 1.0);
        let t1_g1 = 0.5 + 0.8 * t1_iga + dist::normal(&mut g, 0.0, 0.4);
        let t2 = -0.3 - 0.6 * t1_iga + dist::normal(&mut g, 0.0, 0.15);
        let base = [dist::normal(&mut g, 1.0, 0.5), dist::normal(&mut g, 2.0, 0.5)];
        let no_outcome = held_out && j + 1 == n_trials;
        for arm in 0..2u8 {
            let shift = if arm == 1 { [t1_iga, t1_g1] } else { [0.0, 0.0] };
            let rate = PLACEBO_RATE * if arm == 1 { t2.exp() } else { 1.0 };
            for _ in 0..SUBJECTS_PER_ARM {
                let exposure = 0.5 + g.random::<f64>();
                let events = Poisson::new(rate * exposure)
                    .map_err(|e| SimError::Config(e.to_string()))?
                    .sample(&mut g);
                let measured = g.random::<f64>() < MARKER_FRACTION;
                let mut markers = BTreeMap::new();
                for (m, name) in EXAMPLE_MARKERS.iter().enumerate() {
                    let v = base[m] + shift[m] + dist::normal(&mut g, 0.0, MARKER_SD);
                    if measured {
                        markers.insert(name.to_string(), v);
                    }
                }
                if no_outcome && !measured {
                    continue;
                }
                records.push(SubjectRecord {
                    trial_id: trial.clone(),
                    arm,
                    markers,
                    outcome: (!no_outcome).then_some(events),
                    exposure: (!no_outcome).then_some(exposure),
                });
            }
        }
        truth.push(ExampleTruth {
            trial,
            t1_iga,
            t1_g1,
            t2,
        });
    }
    Ok(ExampleFixture { records, truth })
}
