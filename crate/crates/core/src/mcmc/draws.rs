use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{diagnostics, DiagnosticsSummary, SamplerError};

/// Retained draws of one chain, row-major (draw x column).
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub n_draws: usize,
    pub values: Vec<f64>,
    /// Acceptance rate of the T1 random-walk proposals after burn-in.
    pub t1_acceptance: Option<f64>,
    pub omega_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub columns: Vec<String>,
    pub chains: Vec<ChainDraws>,
    pub seed: u64,
    pub fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    seed: u64,
    spec_fingerprint: String,
    chains: usize,
    draws_per_chain: usize,
    columns: Vec<String>,
    t1_acceptance: Vec<Option<f64>>,
    omega_acceptance: Vec<f64>,
    diagnostics: Option<DiagnosticsSummary>,
}

impl PosteriorDraws {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn draws_per_chain(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws)
    }

    /// Draws of column `col` in chain `chain`.
    pub fn chain_column(&self, chain: usize, col: usize) -> Vec<f64> {
        let w = self.columns.len();
        let c = &self.chains[chain];
        (0..c.n_draws).map(|i| c.values[i * w + col]).collect()
    }

    /// All chains concatenated in chain order.
    pub fn pooled(&self, name: &str) -> Option<Vec<f64>> {
        let col = self.column_index(name)?;
        Some((0..self.chains.len()).flat_map(|c| self.chain_column(c, col)).collect())
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        let v = self.pooled(name)?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Write `manifest.json` plus `chain_<i>.csv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<(), SamplerError> {
        let io = |e: std::io::Error| SamplerError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        let manifest = Manifest {
            seed: self.seed,
            spec_fingerprint: format!("{:016x}", self.fingerprint),
            chains: self.chains.len(),
            draws_per_chain: self.draws_per_chain(),
            columns: self.columns.clone(),
            t1_acceptance: self
                .chains
                .iter()
                .map(|c| c.t1_acceptance)
                .collect(),
            omega_acceptance: self.chains.iter().map(|c| c.omega_acceptance).collect(),
            diagnostics: diagnostics(self).ok().map(|d| d.summary()),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| SamplerError::Io(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text).map_err(io)?;
        let w = self.columns.len();
        for (i, c) in self.chains.iter().enumerate() {
            let mut out = csv::Writer::from_path(dir.join(format!("chain_{i}.csv")))
                .map_err(|e| SamplerError::Io(e.to_string()))?;
            out.write_record(&self.columns).map_err(|e| SamplerError::Io(e.to_string()))?;
            for row in c.values.chunks(w) {
                out.write_record(row.iter().map(|v| v.to_string()))
                    .map_err(|e| SamplerError::Io(e.to_string()))?;
            }
            out.flush().map_err(io)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, SamplerError> {
        let err = |e: String| SamplerError::Io(format!("{}: {e}", dir.display()));
        let text = fs::read_to_string(dir.join("manifest.json")).map_err(|e| err(e.to_string()))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        let fingerprint = u64::from_str_radix(&m.spec_fingerprint, 16).map_err(|e| err(e.to_string()))?;
        let mut chains = Vec::with_capacity(m.chains);
        for i in 0..m.chains {
            let mut rd = csv::Reader::from_path(dir.join(format!("chain_{i}.csv"))).map_err(|e| err(e.to_string()))?;
            let header: Vec<String> = rd
                .headers()
                .map_err(|e| err(e.to_string()))?
                .iter()
                .map(str::to_string)
                .collect();
            if header != m.columns {
                return Err(err(format!("chain {i} columns differ from manifest")));
            }
            let mut values = Vec::with_capacity(m.columns.len() * m.draws_per_chain);
            let mut n = 0;
            for rec in rd.records() {
                let rec = rec.map_err(|e| err(e.to_string()))?;
                for f in rec.iter() {
                    values.push(f.parse::<f64>().map_err(|e| err(e.to_string()))?);
                }
                n += 1;
            }
            if n != m.draws_per_chain {
                return Err(err(format!("chain {i} has {n} draws, manifest says {}", m.draws_per_chain)));
            }
            chains.push(ChainDraws {
                n_draws: n,
                values,
                t1_acceptance: m.t1_acceptance.get(i).copied().flatten(),
                omega_acceptance: m.omega_acceptance.get(i).copied().unwrap_or(0.0),
            });
        }
        Ok(Self {
            columns: m.columns,
            chains,
            seed: m.seed,
            fingerprint,
        })
    }
}
