use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{compare, Comparison, CvError, ErrorDistribution};

const KDE_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

/// Gaussian kernel density with Silverman's rule
/// h = 0.9 min(sd, IQR / 1.34) n^(-1/5), on an even grid from 0 to the
/// largest sample.
pub fn kde(samples: &[f64]) -> Density {
    let n = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr = crate::model::quantile_type7(&sorted, 0.75) - crate::model::quantile_type7(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let mut h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        h = 1e-3;
    }
    let hi = sorted.last().copied().unwrap_or(0.0).max(h);
    let grid: Vec<f64> = (0..KDE_GRID).map(|i| hi * i as f64 / (KDE_GRID - 1) as f64).collect();
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    // samples beyond 8 bandwidths contribute nothing measurable
    let density = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&v| v < x - 8.0 * h);
            let up = sorted.partition_point(|&v| v <= x + 8.0 * h);
            sorted[lo..up]
                .iter()
                .map(|&v| {
                    let z = (x - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Density {
        bandwidth: h,
        grid,
        density,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub candidate: String,
    pub mean: f64,
    pub p95: f64,
    /// P(D̃0 < D̃k); absent for the null row.
    pub p_null_less: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub a: String,
    pub b: String,
    /// P(D̃a < D̃b).
    pub comparison: Comparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// Candidates sorted by E[D̃], then the null row.
    pub rows: Vec<CandidateRow>,
    pub pairwise: Vec<PairRow>,
    pub densities: BTreeMap<String, Density>,
}

/// Point and interval summaries, comparison probabilities against the null
/// and between candidates, and densities for plotting.
pub fn rank_candidates(
    errors: &[ErrorDistribution],
    null: &ErrorDistribution,
    n_pairs: usize,
    seed: u64,
) -> Result<RankReport, CvError> {
    let mut rows = Vec::with_capacity(errors.len() + 1);
    for e in errors {
        rows.push(CandidateRow {
            candidate: e.label.clone(),
            mean: e.mean(),
            p95: e.quantile(0.95),
            p_null_less: Some(compare(null, e, n_pairs, seed)?),
        });
    }
    rows.sort_by(|a, b| a.mean.total_cmp(&b.mean).then_with(|| a.candidate.cmp(&b.candidate)));
    rows.push(CandidateRow {
        candidate: null.label.clone(),
        mean: null.mean(),
        p95: null.quantile(0.95),
        p_null_less: None,
    });
    let mut pairwise = Vec::new();
    for (i, a) in errors.iter().enumerate() {
        for b in &errors[i + 1..] {
            pairwise.push(PairRow {
                a: a.label.clone(),
                b: b.label.clone(),
                comparison: compare(a, b, n_pairs, seed)?,
            });
        }
    }
    let densities = errors
        .iter()
        .chain(std::iter::once(null))
        .map(|e| (e.label.clone(), kde(&e.mixture)))
        .collect();
    Ok(RankReport {
        rows,
        pairwise,
        densities,
    })
}

impl RankReport {
    /// Summary table: one row per candidate and the null.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["candidate", "mean_d", "p95_d", "p_null_less", "p_null_less_mcse"])?;
        for r in &self.rows {
            let (p, se) = r
                .p_null_less
                .map_or((String::new(), String::new()), |c| (fmt(c.probability), fmt(c.mcse)));
            out.write_record([r.candidate.clone(), fmt(r.mean), fmt(r.p95), p, se])?;
        }
        out.flush()
    }

    pub fn write_pairwise_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["a", "b", "p_a_less_b", "mcse"])?;
        for p in &self.pairwise {
            out.write_record([
                p.a.clone(),
                p.b.clone(),
                fmt(p.comparison.probability),
                fmt(p.comparison.mcse),
            ])?;
        }
        out.flush()
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kde_integrates_to_about_one() {
        let mut r = crate::mcmc::rng::stream(4, &[]);
        let x: Vec<f64> = (0..5000)
            .map(|_| crate::mcmc::dist::normal(&mut r, 3.0, 0.5))
            .collect();
        let d = kde(&x);
        let dx = d.grid[1] - d.grid[0];
        let area: f64 = d.density.iter().sum::<f64>() * dx;
        assert!((area - 1.0).abs() < 0.02, "{area}");
        let sd = 0.5f64;
        // n^(-1/5) with iqr/1.34 close to sd
        assert!((d.bandwidth / (0.9 * sd * 5000f64.powf(-0.2)) - 1.0).abs() < 0.1);
    }
}
