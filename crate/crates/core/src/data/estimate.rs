use super::{DataError, Family, SubjectRecord, TrialSummary, CLINICAL};

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    /// Add 0.5 events to each arm when an arm has zero events.
    pub continuity_correction: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            continuity_correction: false,
            max_iterations: 100,
            tolerance: 1e-10,
        }
    }
}

/// Estimate the treatment coefficient and its standard error for one
/// response in one trial. `response` is a marker name or [`CLINICAL`] for the
/// outcome column.
pub fn estimate_effect(
    records: &[SubjectRecord],
    response: &str,
    family: Family,
    options: &EstimateOptions,
) -> Result<TrialSummary, DataError> {
    let trial = records
        .first()
        .map(|r| r.trial_id.clone())
        .unwrap_or_default();
    if let Some(other) = records.iter().find(|r| r.trial_id != trial) {
        return Err(DataError::InvalidRecord(format!(
            "records from trials {trial} and {} mixed in one estimation",
            other.trial_id
        )));
    }
    let value = |r: &SubjectRecord| -> Option<f64> {
        if response == CLINICAL {
            r.outcome
        } else {
            r.markers.get(response).copied()
        }
    };
    let (effect, se) = match family {
        Family::GaussianIdentity => {
            let mut arms: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for r in records {
                r.validate()?;
                if let Some(v) = value(r) {
                    arms[r.arm as usize].push(v);
                }
            }
            two_group_ols(&trial, &arms[0], &arms[1])?
        }
        Family::PoissonLogOffset => {
            let mut events = [0.0f64; 2];
            let mut time = [0.0f64; 2];
            let mut used = [0usize; 2];
            for r in records {
                r.validate()?;
                if let Some(y) = value(r) {
                    let t = r.exposure.ok_or_else(|| {
                        DataError::InvalidRecord(format!(
                            "trial {trial}: count outcome without exposure"
                        ))
                    })?;
                    if y < 0.0 || !y.is_finite() {
                        return Err(DataError::InvalidRecord(format!(
                            "trial {trial}: negative or non-finite count {y}"
                        )));
                    }
                    let a = r.arm as usize;
                    events[a] += y;
                    time[a] += t;
                    used[a] += 1;
                }
            }
            for arm in 0..2 {
                if used[arm] == 0 {
                    return Err(DataError::SingleArm {
                        trial: trial.clone(),
                        arm: arm as u8,
                    });
                }
            }
            if let Some(arm) = (0..2).find(|&a| events[a] == 0.0) {
                if !options.continuity_correction {
                    return Err(DataError::ZeroEvents {
                        trial,
                        arm: arm as u8,
                    });
                }
                events[0] += 0.5;
                events[1] += 0.5;
            }
            poisson_newton(&trial, events, time, options)?
        }
    };
    Ok(TrialSummary {
        trial_id: trial,
        candidate_id: response.to_string(),
        effect_hat: effect,
        se_hat: se,
        rho: None,
    })
}

fn two_group_ols(trial: &str, arm0: &[f64], arm1: &[f64]) -> Result<(f64, f64), DataError> {
    for (arm, v) in [arm0, arm1].iter().enumerate() {
        if v.is_empty() {
            return Err(DataError::SingleArm {
                trial: trial.to_string(),
                arm: arm as u8,
            });
        }
    }
    let n0 = arm0.len() as f64;
    let n1 = arm1.len() as f64;
    let m0 = arm0.iter().sum::<f64>() / n0;
    let m1 = arm1.iter().sum::<f64>() / n1;
    let df = n0 + n1 - 2.0;
    if df < 1.0 {
        return Err(DataError::InvalidRecord(format!(
            "trial {trial}: need at least 3 records for a residual variance"
        )));
    }
    let ssr: f64 = arm0.iter().map(|v| (v - m0).powi(2)).sum::<f64>()
        + arm1.iter().map(|v| (v - m1).powi(2)).sum::<f64>();
    let s2 = ssr / df;
    let se = (s2 * (1.0 / n0 + 1.0 / n1)).sqrt();
    if !(se > 0.0) {
        return Err(DataError::InvalidRecord(format!(
            "trial {trial}: zero residual variance"
        )));
    }
    Ok((m1 - m0, se))
}

/// Newton-Raphson for log(mu) = a + b*z + log(t) on arm-level sufficient
/// statistics. Returns (b, se(b)) from the inverse observed information.
fn poisson_newton(
    trial: &str,
    events: [f64; 2],
    time: [f64; 2],
    options: &EstimateOptions,
) -> Result<(f64, f64), DataError> {
    let total_y = events[0] + events[1];
    let total_t = time[0] + time[1];
    let mut a = (total_y / total_t).ln();
    let mut b = 0.0;
    let loglik = |a: f64, b: f64| {
        events[0] * a - a.exp() * time[0] + events[1] * (a + b) - (a + b).exp() * time[1]
    };
    for _ in 0..options.max_iterations {
        let mu0 = (a).exp() * time[0];
        let mu1 = (a + b).exp() * time[1];
        // score
        let ga = (events[0] - mu0) + (events[1] - mu1);
        let gb = events[1] - mu1;
        // information [[mu0+mu1, mu1], [mu1, mu1]]
        let iaa = mu0 + mu1;
        let iab = mu1;
        let ibb = mu1;
        let det = iaa * ibb - iab * iab;
        if !(det > 0.0) || !det.is_finite() {
            break;
        }
        let mut da = (ibb * ga - iab * gb) / det;
        let mut db = (-iab * ga + iaa * gb) / det;
        if da.abs() < options.tolerance && db.abs() < options.tolerance {
            a += da;
            b += db;
            let mu0 = a.exp() * time[0];
            let mu1 = (a + b).exp() * time[1];
            let det = (mu0 + mu1) * mu1 - mu1 * mu1;
            let var_b = (mu0 + mu1) / det;
            return Ok((b, var_b.sqrt()));
        }
        // damped step: halve until the log-likelihood does not decrease
        // beyond roundoff
        let current = loglik(a, b);
        let slack = 1e-12 * current.abs().max(1.0);
        for _ in 0..60 {
            if loglik(a + da, b + db) >= current - slack {
                break;
            }
            da *= 0.5;
            db *= 0.5;
        }
        a += da;
        b += db;
    }
    Err(DataError::NonConvergence {
        trial: trial.to_string(),
        iterations: options.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn gaussian(arm: u8, v: f64) -> SubjectRecord {
        let mut markers = BTreeMap::new();
        markers.insert("m".to_string(), v);
        SubjectRecord {
            trial_id: "t".into(),
            arm,
            markers,
            outcome: None,
            exposure: None,
        }
    }

    fn count(arm: u8, y: f64, t: f64) -> SubjectRecord {
        SubjectRecord {
            trial_id: "t".into(),
            arm,
            markers: BTreeMap::new(),
            outcome: Some(y),
            exposure: Some(t),
        }
    }

    #[test]
    fn gaussian_difference_of_means() {
        let recs = vec![gaussian(0, 1.0), gaussian(0, 3.0), gaussian(1, 4.0), gaussian(1, 6.0)];
        let s = estimate_effect(&recs, "m", Family::GaussianIdentity, &Default::default()).unwrap();
        assert_eq!(s.effect_hat, 3.0);
        assert!((s.se_hat - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn poisson_log_rate_ratio() {
        let recs = vec![count(0, 10.0, 100.0), count(1, 5.0, 100.0)];
        let s = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &Default::default())
            .unwrap();
        assert!((s.effect_hat - (0.5f64).ln()).abs() < 1e-10);
        assert!((s.se_hat - (1.0 / 5.0 + 1.0 / 10.0f64).sqrt()).abs() < 1e-8);
    }

    /// Per-subject Poisson log-likelihood in (a, b).
    fn loglik(recs: &[SubjectRecord], a: f64, b: f64) -> f64 {
        recs.iter()
            .map(|r| {
                let eta = a + b * r.arm as f64 + r.exposure.unwrap().ln();
                r.outcome.unwrap() * eta - eta.exp()
            })
            .sum()
    }

    #[test]
    fn poisson_se_matches_numerical_hessian() {
        let recs = vec![
            count(0, 4.0, 30.0),
            count(0, 6.0, 70.0),
            count(1, 2.0, 45.0),
            count(1, 3.0, 55.0),
        ];
        let s = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &Default::default())
            .unwrap();
        let b = s.effect_hat;
        let a = (10.0f64 / 100.0).ln();
        let h = 1e-4;
        let f = |da: f64, db: f64| loglik(&recs, a + da, b + db);
        let haa = (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h);
        let hbb = (f(0.0, h) - 2.0 * f(0.0, 0.0) + f(0.0, -h)) / (h * h);
        let hab = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
        let det = haa * hbb - hab * hab;
        let var_b = -haa / det;
        assert!((var_b.sqrt() - s.se_hat).abs() < 1e-5, "{} vs {}", var_b.sqrt(), s.se_hat);
    }

    #[test]
    fn zero_events_refused_unless_corrected() {
        let recs = vec![count(0, 10.0, 100.0), count(1, 0.0, 100.0)];
        let err = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &Default::default());
        assert!(matches!(err, Err(DataError::ZeroEvents { arm: 1, .. })));
        let opts = EstimateOptions {
            continuity_correction: true,
            ..Default::default()
        };
        let s = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &opts).unwrap();
        assert!((s.effect_hat - (0.5f64 / 10.5).ln()).abs() < 1e-10);
    }

    #[test]
    fn single_arm() {
        let recs = vec![gaussian(0, 1.0), gaussian(0, 2.0)];
        assert!(matches!(
            estimate_effect(&recs, "m", Family::GaussianIdentity, &Default::default()),
            Err(DataError::SingleArm { arm: 1, .. })
        ));
        let recs = vec![count(1, 3.0, 10.0)];
        assert!(matches!(
            estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &Default::default()),
            Err(DataError::SingleArm { arm: 0, .. })
        ));
    }

    #[test]
    fn missing_markers_are_skipped() {
        let mut recs = vec![gaussian(0, 1.0), gaussian(0, 3.0), gaussian(1, 4.0), gaussian(1, 6.0)];
        recs.push(count(1, 1.0, 1.0));
        let s = estimate_effect(&recs, "m", Family::GaussianIdentity, &Default::default()).unwrap();
        assert_eq!(s.effect_hat, 3.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gaussian_shift_and_relabel(
                a0 in proptest::collection::vec(-10.0f64..10.0, 2..8),
                a1 in proptest::collection::vec(-10.0f64..10.0, 2..8),
                c in -50.0f64..50.0,
            ) {
                let build = |x0: &[f64], x1: &[f64], shift: f64| -> Vec<SubjectRecord> {
                    x0.iter().map(|v| gaussian(0, v + shift))
                        .chain(x1.iter().map(|v| gaussian(1, v + shift)))
                        .collect()
                };
                let opts = EstimateOptions::default();
                let base = estimate_effect(&build(&a0, &a1, 0.0), "m", Family::GaussianIdentity, &opts);
                prop_assume!(base.is_ok());
                let base = base.unwrap();
                let m0 = a0.iter().sum::<f64>() / a0.len() as f64;
                let m1 = a1.iter().sum::<f64>() / a1.len() as f64;
                prop_assert!((base.effect_hat - (m1 - m0)).abs() < 1e-12);
                let shifted = estimate_effect(&build(&a0, &a1, c), "m", Family::GaussianIdentity, &opts).unwrap();
                prop_assert!((shifted.effect_hat - base.effect_hat).abs() < 1e-9);
                let flipped = estimate_effect(&build(&a1, &a0, 0.0), "m", Family::GaussianIdentity, &opts).unwrap();
                prop_assert!((flipped.effect_hat + base.effect_hat).abs() < 1e-12);
            }

            #[test]
            fn poisson_closed_form(
                y0 in 1u32..500, y1 in 1u32..500,
                t0 in 1.0f64..1000.0, t1 in 1.0f64..1000.0,
            ) {
                let recs = vec![count(0, y0 as f64, t0), count(1, y1 as f64, t1)];
                let s = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &Default::default()).unwrap();
                let expected = ((y1 as f64 / t1) / (y0 as f64 / t0)).ln();
                prop_assert!((s.effect_hat - expected).abs() < 1e-8);
                let se = (1.0 / y1 as f64 + 1.0 / y0 as f64).sqrt();
                prop_assert!((s.se_hat - se).abs() < 1e-8);
            }
        }
    }
}
