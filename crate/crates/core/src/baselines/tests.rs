use proptest::prelude::*;

use super::*;
use crate::cv::{four_step, MixtureOptions};
use crate::mcmc::effective_sample_size;
use crate::data::{assemble_dataset, TrialSummary, CLINICAL};

fn dataset(points: &[(f64, f64)]) -> Dataset {
    let mut rows = Vec::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let id = format!("t{i:02}");
        rows.push(TrialSummary::new(&id, CLINICAL, *y, 0.2));
        rows.push(TrialSummary::new(&id, "k", *x, 0.1));
    }
    assemble_dataset(&rows).unwrap()
}

#[test]
fn noiseless_line_predicts_exactly() {
    let pts: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.5 - 2.0 * i as f64)).collect();
    let e = ols_loo(&dataset(&pts), "k", 100, 1).unwrap();
    for (p, (_, y)) in e.loo_point.iter().zip(&pts) {
        assert!((p - y).abs() < 1e-12);
    }
    // zero residual variance, so no spread either
    assert!(e.mixture.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn constant_candidate_is_rank_deficient() {
    let pts = [(1.0, 0.0), (1.0, 1.0), (1.0, 2.0), (1.0, -1.0)];
    assert!(matches!(ols_loo(&dataset(&pts), "k", 10, 1), Err(BaselineError::RankDeficient(_))));
    assert!(matches!(
        ols_loo(&dataset(&pts[..2]), "k", 10, 1),
        Err(BaselineError::TooFewTrials(2))
    ));
}

proptest! {
    #[test]
    fn loo_points_match_hat_matrix_formula(
        pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..12)
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let full = fit_line(&x, &y);
        prop_assume!(full.is_some());
        let full = full.unwrap();
        prop_assume!(full.leverage.iter().all(|h| *h < 0.99));
        // each leave-one-out fit must itself be identifiable
        prop_assume!((0..x.len()).all(|j| {
            let xs: Vec<f64> = (0..x.len()).filter(|&i| i != j).map(|i| x[i]).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() > 1e-3
        }));
        let e = ols_loo(&dataset(&pts), "k", 2, 3).unwrap();
        for j in 0..x.len() {
            let resid = y[j] - full.intercept - full.slope * x[j];
            let oracle = y[j] - resid / (1.0 - full.leverage[j]);
            prop_assert!((e.loo_point[j] - oracle).abs() < 1e-10 * (1.0 + oracle.abs()),
                "{} vs {}", e.loo_point[j], oracle);
        }
    }
}

#[test]
fn ols_is_optimistic_under_no_association() {
    // unrelated effects: loo errors are large, spread of the fitted value small
    let mut r = rng::stream(5, &[]);
    let pts: Vec<(f64, f64)> = (0..20)
        .map(|_| (dist::normal(&mut r, 2.0, 1.0), dist::normal(&mut r, -1.0, 1.0)))
        .collect();
    let e = ols_loo(&dataset(&pts), "k", 500, 1).unwrap();
    let d_hat: f64 = e
        .loo_point
        .iter()
        .zip(&pts)
        .map(|(p, (_, y))| (y - p).abs())
        .sum::<f64>()
        / 20.0;
    assert!(e.mean() < 0.5 * d_hat, "{} vs {}", e.mean(), d_hat);
}

/// Posterior mean of `name` and its Monte Carlo standard error.
fn effective_mcse(draws: &PosteriorDraws, name: &str) -> (f64, f64) {
    let col = draws.column_index(name).unwrap();
    let chains: Vec<Vec<f64>> = (0..draws.chains.len()).map(|c| draws.chain_column(c, col)).collect();
    let all: Vec<f64> = chains.concat();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / effective_sample_size(&chains)).sqrt())
}

fn fixture() -> Dataset {
    let mut r = rng::stream(12, &[]);
    let pts: Vec<(f64, f64)> = (0..8)
        .map(|_| {
            let t1 = dist::normal(&mut r, 1.0, 1.0);
            (t1 + dist::normal(&mut r, 0.0, 0.1), 0.4 - 0.9 * t1 + dist::normal(&mut r, 0.0, 0.3))
        })
        .collect();
    dataset(&pts)
}

#[test]
fn dh_is_the_restricted_nonparametric_model() {
    let d = fixture();
    let cfg = SamplerConfig {
        chains: 4,
        burn_in: 1000,
        draws: 5000,
        seed: 17,
        ..Default::default()
    };
    let k = ["k".to_string()];
    let dh = dh_spec(&DhPriors::default()).with_mode(Mode::Full, &k);
    let mut restricted = ModelSpec::new(Mode::Full, &k);
    restricted.fixed.spline_b = Some(0.0);
    let restricted_cfg = SamplerConfig {
        dp_truncation: Some(1),
        ..cfg.clone()
    };
    let a = cv::fit(&d, &dh, &cfg, "dh").unwrap();
    let b = cv::fit(&d, &restricted, &restricted_cfg, "restricted").unwrap();
    let mut names: Vec<String> = d.trials().iter().map(|t| format!("t2[{}]", t.id)).collect();
    names.push("beta1[k]".into());
    names.push("beta0".into());
    for name in &names {
        let (ma, sa) = effective_mcse(&a, name);
        let (mb, sb) = effective_mcse(&b, name);
        let tol = 3.5 * (sa * sa + sb * sb).sqrt();
        assert!((ma - mb).abs() < tol, "{name}: {ma} vs {mb} (tol {tol})");
    }
}

#[test]
fn dh_refits_plug_into_error_machinery() {
    let d = fixture();
    let cfg = SamplerConfig {
        chains: 2,
        burn_in: 300,
        draws: 400,
        seed: 2,
        ..Default::default()
    };
    let (full, refits) = dh_fit_loo(&d, "k", &DhPriors::default(), &cfg, &CvOptions::default()).unwrap();
    assert_eq!(refits.len(), 8);
    let e = cv::error_distribution(&full, &refits, "dh:k", &MixtureOptions::default()).unwrap();
    assert!(e.mixture.iter().all(|v| *v >= 0.0));
    // the null refits come from the shared null model
    let fs = four_step(
        &d,
        &["k".into()],
        &ModelSpec::new(Mode::Full, &[]),
        &ModelSpec::new(Mode::Null, &[]),
        &cfg,
        &CvOptions::default(),
    )
    .unwrap();
    let null = cv::error_distribution(&full, &fs.null_loo, "null", &MixtureOptions::default()).unwrap();
    assert_eq!(null.trials, e.trials);
}
