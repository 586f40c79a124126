use super::*;
use crate::data::{estimate_effect, Family};
use crate::mcmc::SamplerConfig;

fn scenario(n_trials: usize, t1_dist: T1Dist, link: LinkFn, sd: f64, se: f64) -> ScenarioConfig {
    ScenarioConfig {
        id: "test".into(),
        name: String::new(),
        n_trials,
        n_replicates: 1,
        t1_dist,
        link,
        t2_given_t1_sd: sd,
        se1_scale: se,
        se2_scale: se,
        se_spread: 0.0,
        seed: 7,
        harness_constants: Vec::new(),
    }
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn effects(rep: &Replicate, candidate: &str) -> Vec<f64> {
    rep.dataset
        .trials()
        .iter()
        .map(|t| {
            if candidate == CLINICAL {
                t.clinical.unwrap().effect
            } else {
                t.candidates[candidate].effect
            }
        })
        .collect()
}

#[test]
fn presets_parse_and_validate() {
    let p = presets();
    assert_eq!(p.version, 1);
    let ids: Vec<&str> = p.presets.iter().map(|s| s.id.as_str()).collect();
    let expected: Vec<String> = (0..=13).map(|i| i.to_string()).collect();
    assert_eq!(ids, expected.iter().map(String::as_str).collect::<Vec<_>>());
    for s in &p.presets {
        s.validate().unwrap();
        assert!(!s.harness_constants.is_empty());
        assert!(s.footnote().contains("se1_scale="));
    }
    assert_eq!(preset("13").unwrap().n_trials, 12);
    assert!(matches!(preset("99"), Err(SimError::Config(_))));
}

#[test]
fn invalid_scales_are_refused() {
    let mut s = scenario(5, T1Dist::Mixture3, LinkFn::None { level: 0.0 }, 1.0, 0.1);
    s.se2_scale = 0.0;
    assert!(matches!(s.validate(), Err(SimError::Config(_))));
    s.se2_scale = 0.1;
    s.n_trials = 2;
    assert!(s.validate().is_err());
}

#[test]
fn no_link_means_independence() {
    let s = scenario(2000, T1Dist::Normal { mean: 2.0, sd: 1.0 }, LinkFn::None { level: 0.0 }, 1.0, 0.1);
    let rep = generate_replicate(&s, 0).unwrap();
    let r = correlation(&rep.true_t1, &rep.true_t2);
    assert!(r.abs() < 0.05, "{r}");
}

#[test]
fn linear_residual_sd_is_one() {
    let link = LinkFn::Linear { intercept: 0.0, slope: 1.0 };
    let s = scenario(2000, T1Dist::Normal { mean: 2.0, sd: 1.0 }, link.clone(), 1.0, 1e-6);
    let rep = generate_replicate(&s, 0).unwrap();
    let (t1, t2) = (effects(&rep, CANDIDATE), effects(&rep, CLINICAL));
    let resid: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| b - link.eval(*a)).collect();
    let m = resid.iter().sum::<f64>() / resid.len() as f64;
    let sd = (resid.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (resid.len() - 1) as f64).sqrt();
    assert!((sd - 1.0).abs() < 0.05, "{sd}");
}

#[test]
fn mixture_mean_is_one_third() {
    let s = scenario(3000, T1Dist::Mixture3, LinkFn::None { level: 0.0 }, 1.0, 0.1);
    let rep = generate_replicate(&s, 0).unwrap();
    let m = rep.true_t1.iter().sum::<f64>() / 3000.0;
    assert!((m - 1.0 / 3.0).abs() < 0.06, "{m}");
}

#[test]
fn replicates_are_seeded_by_identity() {
    let mut s = preset("1").unwrap();
    s.n_replicates = 4;
    let all = generate(&s).unwrap();
    assert_eq!(all[2], generate_replicate(&s, 2).unwrap());
    assert_ne!(all[1].true_t2, all[2].true_t2);
    // the oracle candidate reports the true clinical effect
    assert_eq!(effects(&all[0], ORACLE), all[0].true_t2);
    // scale changes keep truths and standardized noise
    let mut wide = s.clone();
    wide.se2_scale *= 5.0;
    let a = generate_replicate(&s, 3).unwrap();
    let b = generate_replicate(&wide, 3).unwrap();
    assert_eq!(a.true_t2, b.true_t2);
    let (ya, yb) = (effects(&a, CLINICAL), effects(&b, CLINICAL));
    for j in 0..ya.len() {
        let (ea, eb) = (ya[j] - a.true_t2[j], yb[j] - b.true_t2[j]);
        assert!((eb - 5.0 * ea).abs() < 1e-9);
    }
}

fn tiny_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig {
        chains: 2,
        burn_in: 300,
        draws: 300,
        seed,
        ..Default::default()
    }
}

#[test]
fn report_arithmetic_and_worker_independence() {
    let mut s = preset("1").unwrap();
    s.n_trials = 6;
    s.n_replicates = 2;
    let methods = [Method::Ols, Method::New, Method::Dh];
    let opts = SimOptions {
        workers: 1,
        n_pairs: 500,
        ols_draws: 300,
        ..Default::default()
    };
    let a = run_scenario(&s, &methods, &tiny_sampler(3), &opts).unwrap();
    let b = run_scenario(&s, &methods, &tiny_sampler(3), &SimOptions { workers: 2, ..opts.clone() }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.methods, vec![Method::New, Method::Dh, Method::Ols]);
    for m in &a.summary {
        assert_eq!(m.bias, m.mean_d_tilde - m.mean_d_hat);
        let d: Vec<f64> = a.replicates.iter().map(|r| r.method(m.method).unwrap().d_hat).collect();
        assert!(d.iter().all(|v| *v >= 0.0));
        assert_eq!(m.mean_d_hat, d.iter().sum::<f64>() / d.len() as f64);
    }
    let table = a.text_table();
    for name in ["new", "dh", "ols", "harness constants"] {
        assert!(table.contains(name), "{table}");
    }
    let mut csv = Vec::new();
    a.write_summary_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    assert!(matches!(
        run_scenario(&s, &[], &tiny_sampler(3), &opts),
        Err(SimError::Config(_))
    ));
}

#[test]
fn oracle_error_vanishes_with_small_ses() {
    let mut s = scenario(8, T1Dist::Normal { mean: 2.0, sd: 1.0 }, LinkFn::None { level: 0.0 }, 1.0, 1e-3);
    s.link = LinkFn::Linear { intercept: 0.0, slope: 1.0 };
    let opts = SimOptions {
        workers: 1,
        n_pairs: 200,
        ols_draws: 50,
        ..Default::default()
    };
    let r = run_scenario(&s, &[Method::Ols, Method::New], &tiny_sampler(1), &opts).unwrap();
    let ols = r.replicates[0].method(Method::Ols).unwrap();
    assert!(ols.oracle_d_hat < 5e-3, "{}", ols.oracle_d_hat);
    let new = r.replicates[0].method(Method::New).unwrap();
    assert!(new.oracle_d_hat < 0.05 && new.oracle_d_hat < new.d_hat, "{new:?}");
}

#[test]
fn larger_clinical_se_does_not_reduce_error() {
    let mut s = preset("1").unwrap();
    s.n_trials = 8;
    s.n_replicates = 20;
    let mut noisy = s.clone();
    noisy.se2_scale = 0.6;
    let opts = SimOptions {
        workers: 1,
        n_pairs: 100,
        ..Default::default()
    };
    let sampler = SamplerConfig {
        burn_in: 200,
        draws: 200,
        ..tiny_sampler(9)
    };
    let a = run_scenario(&s, &[Method::New], &sampler, &opts).unwrap();
    let b = run_scenario(&noisy, &[Method::New], &sampler, &opts).unwrap();
    let violations = a
        .replicates
        .iter()
        .zip(&b.replicates)
        .filter(|(x, y)| y.methods[0].d_hat < x.methods[0].d_hat)
        .count();
    assert!(violations <= 1, "{violations} of 20");
}

#[test]
fn example_fixture_shape() {
    let f = example_subjects(4, 12, false).unwrap();
    assert_eq!(f.truth.len(), 12);
    let t = &f.truth[0];
    let recs: Vec<_> = f.records.iter().filter(|r| r.trial_id == t.trial).cloned().collect();
    let measured = recs.iter().filter(|r| !r.markers.is_empty()).count() as f64;
    assert!((measured / recs.len() as f64 - 0.25).abs() < 0.05);
    // estimates land near the truth at this sample size
    let opts = Default::default();
    let c = estimate_effect(&recs, CLINICAL, Family::PoissonLogOffset, &opts).unwrap();
    assert!((c.effect_hat - t.t2).abs() < 4.0 * c.se_hat, "{c:?} vs {}", t.t2);
    let m = estimate_effect(&recs, "iga", Family::GaussianIdentity, &opts).unwrap();
    assert!((m.effect_hat - t.t1_iga).abs() < 4.0 * m.se_hat, "{m:?} vs {}", t.t1_iga);
    let held = example_subjects(4, 13, true).unwrap();
    assert_eq!(held.truth[..12], f.truth[..]);
    assert!(held
        .records
        .iter()
        .filter(|r| r.trial_id == "site13")
        .all(|r| r.outcome.is_none() && !r.markers.is_empty()));
}
