use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

/// Gamma with shape and rate.
#[inline]
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// Inverse gamma with shape and scale: 1 / Gamma(shape, rate = scale).
#[inline]
pub fn inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    1.0 / gamma(rng, shape, scale)
}

#[inline]
pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("beta parameters must be positive").sample(rng)
}

/// Index drawn with probability proportional to `exp(logw[i])`.
pub fn categorical_log<R: Rng + ?Sized>(rng: &mut R, logw: &[f64], scratch: &mut Vec<f64>) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scratch.clear();
    let mut total = 0.0;
    for &l in logw {
        total += (l - max).exp();
        scratch.push(total);
    }
    let u = rng.random::<f64>() * total;
    scratch.iter().position(|&c| u < c).unwrap_or(logw.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let g: f64 = (0..n).map(|_| gamma(&mut rng, 3.0, 2.0)).sum::<f64>() / n as f64;
        assert!((g - 1.5).abs() < 0.01);
        let ig: f64 = (0..n).map(|_| inv_gamma(&mut rng, 4.0, 3.0)).sum::<f64>() / n as f64;
        assert!((ig - 1.0).abs() < 0.01);
        let b: f64 = (0..n).map(|_| beta(&mut rng, 2.0, 6.0)).sum::<f64>() / n as f64;
        assert!((b - 0.25).abs() < 0.005);
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logw = [0.2f64.ln(), f64::NEG_INFINITY, 0.5f64.ln(), 0.3f64.ln()];
        let mut scratch = Vec::new();
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[categorical_log(&mut rng, &logw, &mut scratch)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[2] as f64 / 1e5 - 0.5).abs() < 0.01);
    }
}
