use std::f64::consts::PI;

use super::{DatasetView, ModelError};

/// True effects for every trial of a view: `t1[candidate][trial]`, `t2[trial]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub t1: Vec<Vec<f64>>,
    pub t2: Vec<f64>,
}

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// Log density of (x1, x2) under a bivariate normal with means (m1, m2),
/// sds (s1, s2) and correlation rho.
pub fn bivariate_normal_logpdf(x1: f64, x2: f64, m1: f64, m2: f64, s1: f64, s2: f64, rho: f64) -> f64 {
    let z1 = (x1 - m1) / s1;
    let z2 = (x2 - m2) / s2;
    let one_m = 1.0 - rho * rho;
    -(2.0 * PI).ln() - s1.ln() - s2.ln() - 0.5 * one_m.ln()
        - (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / (2.0 * one_m)
}

/// Approximate likelihood of the view's estimates given the true effects.
/// Rows are independent normals except a correlated (candidate, clinical)
/// pair, which contributes one bivariate term.
pub fn log_likelihood(view: &DatasetView, latent: &LatentState) -> Result<f64, ModelError> {
    let n = view.n_trials();
    if latent.t2.len() != n {
        return Err(ModelError::MissingLatent("t2".into()));
    }
    if latent.t1.len() != view.candidates.len() || latent.t1.iter().any(|v| v.len() != n) {
        return Err(ModelError::MissingLatent("t1".into()));
    }
    let mut total = 0.0;
    for j in 0..n {
        let paired = view.correlated_candidate(j);
        for (k, rows) in view.markers.iter().enumerate() {
            if let Some(o) = rows[j] {
                if paired == Some(k) {
                    let c = view.clinical[j].expect("paired row implies clinical row");
                    total += bivariate_normal_logpdf(
                        o.effect,
                        c.effect,
                        latent.t1[k][j],
                        latent.t2[j],
                        o.se,
                        c.se,
                        o.rho.unwrap_or(0.0),
                    );
                } else {
                    total += normal_logpdf(o.effect, latent.t1[k][j], o.se);
                }
            }
        }
        if paired.is_none() {
            if let Some(c) = view.clinical[j] {
                total += normal_logpdf(c.effect, latent.t2[j], c.se);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn obs(effect: f64, se: f64, rho: Option<f64>) -> Option<Observation> {
        Some(Observation { effect, se, rho })
    }

    fn view(clinical: Vec<Option<Observation>>, marker: Vec<Option<Observation>>) -> DatasetView {
        DatasetView {
            trials: (0..clinical.len()).map(|j| j.to_string()).collect(),
            clinical,
            candidates: vec!["k".into()],
            markers: vec![marker],
        }
    }

    #[test]
    fn standard_normal_at_mean() {
        let v = DatasetView {
            trials: vec!["a".into()],
            clinical: vec![obs(0.3, 1.0, None)],
            candidates: vec![],
            markers: vec![],
        };
        let l = log_likelihood(&v, &LatentState { t1: vec![], t2: vec![0.3] }).unwrap();
        assert!((l + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn additive_over_rows() {
        let v = view(vec![obs(1.0, 0.5, None), None], vec![obs(0.2, 0.3, None), obs(-1.0, 2.0, None)]);
        let lat = LatentState { t1: vec![vec![0.1, -0.5]], t2: vec![0.7, 3.0] };
        let joint = log_likelihood(&v, &lat).unwrap();
        let parts = normal_logpdf(1.0, 0.7, 0.5) + normal_logpdf(0.2, 0.1, 0.3) + normal_logpdf(-1.0, -0.5, 2.0);
        assert!((joint - parts).abs() < 1e-12);
    }

    #[test]
    fn zero_correlation_matches_independent_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x1: f64 = rng.random_range(-3.0..3.0);
            let x2: f64 = rng.random_range(-3.0..3.0);
            let m1: f64 = rng.random_range(-3.0..3.0);
            let m2: f64 = rng.random_range(-3.0..3.0);
            let s1: f64 = rng.random_range(0.1..2.0);
            let s2: f64 = rng.random_range(0.1..2.0);
            let biv = view(vec![obs(x2, s2, None)], vec![obs(x1, s1, Some(0.0))]);
            let ind = view(vec![obs(x2, s2, None)], vec![obs(x1, s1, None)]);
            let lat = LatentState { t1: vec![vec![m1]], t2: vec![m2] };
            let a = log_likelihood(&biv, &lat).unwrap();
            let b = log_likelihood(&ind, &lat).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn maximized_at_estimates() {
        let v = view(
            vec![obs(1.0, 0.5, None), obs(-0.4, 0.8, None)],
            vec![obs(0.2, 0.3, Some(0.4)), obs(2.0, 0.6, None)],
        );
        let mut lat = LatentState { t1: vec![vec![0.2, 2.0]], t2: vec![1.0, -0.4] };
        let h = 1e-6;
        let base = log_likelihood(&v, &lat).unwrap();
        for idx in 0..4 {
            let bump = |lat: &mut LatentState, d: f64| {
                if idx < 2 { lat.t1[0][idx] += d } else { lat.t2[idx - 2] += d }
            };
            bump(&mut lat, h);
            let up = log_likelihood(&v, &lat).unwrap();
            bump(&mut lat, -2.0 * h);
            let down = log_likelihood(&v, &lat).unwrap();
            bump(&mut lat, h);
            assert!(((up - down) / (2.0 * h)).abs() < 1e-6);
            assert!(up <= base && down <= base);
        }
    }

    #[test]
    fn missing_latent() {
        let v = view(vec![obs(1.0, 0.5, None)], vec![obs(0.2, 0.3, None)]);
        let lat = LatentState { t1: vec![], t2: vec![0.0] };
        assert!(matches!(log_likelihood(&v, &lat), Err(ModelError::MissingLatent(_))));
    }
}
