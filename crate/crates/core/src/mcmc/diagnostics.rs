//! Split-R̂ and effective sample size.

use serde::{Deserialize, Serialize};

use super::{PosteriorDraws, SamplerError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rhat: f64,
    pub ess: f64,
}

/// Per-column diagnostics in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub columns: Vec<String>,
    pub values: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_rhat: f64,
    pub max_rhat_column: String,
    pub min_ess: f64,
    pub min_ess_column: String,
}

impl Diagnostics {
    pub fn summary(&self) -> DiagnosticsSummary {
        let mut s = DiagnosticsSummary {
            max_rhat: 0.0,
            max_rhat_column: String::new(),
            min_ess: f64::INFINITY,
            min_ess_column: String::new(),
        };
        for (c, d) in self.columns.iter().zip(&self.values) {
            if d.rhat > s.max_rhat {
                s.max_rhat = d.rhat;
                s.max_rhat_column = c.clone();
            }
            if d.ess < s.min_ess {
                s.min_ess = d.ess;
                s.min_ess_column = c.clone();
            }
        }
        s
    }

    pub fn get(&self, column: &str) -> Option<Diagnostic> {
        self.columns.iter().position(|c| c == column).map(|i| self.values[i])
    }
}

/// Split-R̂ and ESS for every column. Needs at least 2 chains and 50
/// retained draws per chain.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Diagnostics, SamplerError> {
    let (m, n) = (draws.chains.len(), draws.draws_per_chain());
    if m < 2 || n < 50 {
        return Err(SamplerError::InsufficientDraws { chains: m, draws: n });
    }
    let values = (0..draws.columns.len())
        .map(|col| {
            let chains: Vec<Vec<f64>> = (0..m).map(|c| draws.chain_column(c, col)).collect();
            Diagnostic {
                rhat: split_rhat(&chains),
                ess: effective_sample_size(&chains),
            }
        })
        .collect();
    Ok(Diagnostics {
        columns: draws.columns.clone(),
        values,
    })
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..n], &c[c.len() - n..]])
        .collect()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// (W, var_plus) of the split chains.
fn variance_terms(parts: &[&[f64]]) -> (f64, f64, Vec<f64>) {
    let n = parts[0].len() as f64;
    let stats: Vec<(f64, f64)> = parts.iter().map(|p| mean_var(p)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / parts.len() as f64;
    let b_over_n = mean_var(&means).1;
    (w, (n - 1.0) / n * w + b_over_n, means)
}

pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let (w, var_plus, means) = variance_terms(&parts);
    if w <= 0.0 {
        return if means.windows(2).all(|p| p[0] == p[1]) { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

/// Multi-chain ESS on split chains with Geyer's initial positive sequence.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let m = parts.len();
    let n = parts[0].len();
    let total = (m * n) as f64;
    let (w, var_plus, means) = variance_terms(&parts);
    if w <= 0.0 {
        return total;
    }
    let autocov = |t: usize| -> f64 {
        parts
            .iter()
            .zip(&means)
            .map(|(p, mu)| (0..n - t).map(|i| (p[i] - mu) * (p[i + t] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    // autocov(0) uses 1/n; W uses 1/(n-1)
    let w_n = w * (n as f64 - 1.0) / n as f64;
    let rho = |t: usize| 1.0 - (w_n - autocov(t)) / var_plus;
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        // monotone sequence
        pair = pair.min(prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        t += 2;
    }
    let tau = tau.max(1.0 / total.log10().max(1.0));
    total / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{dist, rng::stream};

    fn draws_from(chains: Vec<Vec<f64>>) -> PosteriorDraws {
        PosteriorDraws {
            columns: vec!["x".into()],
            chains: chains
                .into_iter()
                .map(|v| crate::mcmc::ChainDraws {
                    n_draws: v.len(),
                    values: v,
                    t1_acceptance: None,
                    omega_acceptance: 0.0,
                })
                .collect(),
            seed: 0,
            fingerprint: 0,
        }
    }

    #[test]
    fn iid_chains_rhat_near_one() {
        let mut rng = stream(1, &[]);
        let z: Vec<f64> = (0..4000).map(|_| dist::normal(&mut rng, 0.0, 1.0)).collect();
        let d = diagnostics(&draws_from(vec![z.clone(), z])).unwrap();
        let r = d.values[0].rhat;
        assert!((0.99..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn separated_chains_do_not_mix() {
        let mut rng = stream(2, &[]);
        let a: Vec<f64> = (0..500).map(|_| dist::normal(&mut rng, -5.0, 1.0)).collect();
        let b: Vec<f64> = (0..500).map(|_| dist::normal(&mut rng, 5.0, 1.0)).collect();
        assert!(split_rhat(&[a, b]) > 2.0);
    }

    #[test]
    fn ar1_ess_matches_closed_form() {
        // ESS of AR(1) with coefficient phi is n (1 - phi) / (1 + phi)
        let phi: f64 = 0.5;
        let n = 20_000;
        let mut rng = stream(3, &[]);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = dist::normal(&mut rng, 0.0, (1.0 / (1.0 - phi * phi)).sqrt());
                (0..n)
                    .map(|_| {
                        x = phi * x + dist::normal(&mut rng, 0.0, 1.0);
                        x
                    })
                    .collect()
            })
            .collect();
        let ess = effective_sample_size(&chains);
        let expected = (4 * n) as f64 / 3.0;
        assert!((ess / expected - 1.0).abs() < 0.25, "{ess} vs {expected}");
    }

    #[test]
    fn too_few_draws() {
        let d = draws_from(vec![vec![0.0; 40], vec![0.0; 40]]);
        assert!(matches!(diagnostics(&d), Err(SamplerError::InsufficientDraws { .. })));
        let one = draws_from(vec![vec![0.0; 100]]);
        assert!(diagnostics(&one).is_err());
    }
}
