use super::ModelError;

/// Linear-interpolation empirical quantile (the "type 7" convention):
/// position `h = (n - 1) p` in the sorted sample.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let p = p.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knots at the given percentiles (default 33rd and 66th), deduplicated.
pub fn default_knots(values: &[f64], probs: &[f64]) -> Result<Vec<f64>, ModelError> {
    let mut sorted: Vec<f64> = values.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::DegenerateData("non-finite value".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(ModelError::DegenerateData(format!(
            "knots need at least 3 distinct values, got {}",
            distinct.len()
        )));
    }
    let mut knots: Vec<f64> = probs.iter().map(|&p| quantile_type7(&sorted, p)).collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: the smallest x with empirical CDF weight, by the
    /// textbook definition Q(p) = (1 - g) x_(j) + g x_(j+1), j = floor(1 + (n-1)p).
    fn textbook(sample: &[f64], p: f64) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let m = 1.0 - p;
        let jp = n * p + m;
        let j = jp.floor();
        let g = jp - j;
        let j = j as usize;
        let xj = s[j - 1];
        let xj1 = if j < s.len() { s[j] } else { s[j - 1] };
        (1.0 - g) * xj + g * xj1
    }

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let k = default_knots(&v, &[0.33, 0.66]).unwrap();
        assert!((k[0] - 33.67).abs() < 1e-9);
        assert!((k[1] - 66.34).abs() < 1e-9);
        assert!((k[0] - textbook(&v, 0.33)).abs() < 1e-12);
        assert!((k[1] - textbook(&v, 0.66)).abs() < 1e-12);
    }

    #[test]
    fn degenerate() {
        assert!(matches!(default_knots(&[2.0; 5], &[0.33, 0.66]), Err(ModelError::DegenerateData(_))));
        assert!(default_knots(&[1.0, 2.0, 1.0], &[0.33, 0.66]).is_err());
    }

    #[test]
    fn three_values_inside_and_ordered() {
        let k = default_knots(&[2.0, 0.0, 1.0], &[0.33, 0.66]).unwrap();
        assert_eq!(k.len(), 2);
        assert!(0.0 < k[0] && k[0] < k[1] && k[1] < 2.0);
    }

    #[test]
    fn agrees_with_textbook_on_random_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in 3..40 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            for p in [0.0, 0.1, 0.33, 0.5, 0.66, 0.9, 1.0] {
                assert!((quantile_type7(&s, p) - textbook(&v, p)).abs() < 1e-12);
            }
        }
    }
}
