//! Trial inputs: subject-level records, per-trial effect summaries, and the
//! assembled multi-trial dataset the hierarchical model is fitted to.

mod estimate;
mod generalize;
pub mod io;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use estimate::{estimate_effect, EstimateOptions};
pub use generalize::{classify_generalizability, AttributeValue, Support, TrialCharacteristics};

/// Reserved candidate id for the clinical outcome row of a trial.
pub const CLINICAL: &str = "clinical";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("trial {trial}: arm {arm} has no usable records")]
    SingleArm { trial: String, arm: u8 },
    #[error("trial {trial}: zero events in arm {arm}")]
    ZeroEvents { trial: String, arm: u8 },
    #[error("trial {trial}: Newton iterations did not converge after {iterations} steps")]
    NonConvergence { trial: String, iterations: usize },
    #[error("duplicate entry for trial {trial}, candidate {candidate}")]
    DuplicateEntry { trial: String, candidate: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("attribute {0} is unknown to every evaluation trial")]
    VocabularyMismatch(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One participant's data. Markers are on the link scale of their estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub trial_id: String,
    pub arm: u8,
    pub markers: BTreeMap<String, f64>,
    pub outcome: Option<f64>,
    pub exposure: Option<f64>,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.arm > 1 {
            return Err(DataError::InvalidRecord(format!(
                "trial {}: arm must be 0 or 1, got {}",
                self.trial_id, self.arm
            )));
        }
        if let Some(t) = self.exposure {
            if !(t > 0.0 && t.is_finite()) {
                return Err(DataError::InvalidRecord(format!(
                    "trial {}: exposure must be positive, got {t}",
                    self.trial_id
                )));
            }
        }
        if self.markers.is_empty() && self.outcome.is_none() {
            return Err(DataError::InvalidRecord(format!(
                "trial {}: record has neither markers nor outcome",
                self.trial_id
            )));
        }
        Ok(())
    }
}

/// Within-trial model family. The family fixes the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Difference of arm means (identity link).
    GaussianIdentity,
    /// Log rate ratio from a Poisson model with log-exposure offset.
    PoissonLogOffset,
}

impl Family {
    pub fn link(self) -> Link {
        match self {
            Family::GaussianIdentity => Link::Identity,
            Family::PoissonLogOffset => Link::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Identity,
    Log,
}

/// Estimated treatment effect of one response in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub candidate_id: String,
    pub effect_hat: f64,
    pub se_hat: f64,
    /// Within-trial correlation with the clinical estimate; `None` means
    /// working independence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl TrialSummary {
    pub fn new(trial_id: &str, candidate_id: &str, effect_hat: f64, se_hat: f64) -> Self {
        Self {
            trial_id: trial_id.to_string(),
            candidate_id: candidate_id.to_string(),
            effect_hat,
            se_hat,
            rho: None,
        }
    }

    pub fn is_clinical(&self) -> bool {
        self.candidate_id == CLINICAL
    }

    fn validate(&self) -> Result<(), DataError> {
        if !(self.se_hat > 0.0 && self.se_hat.is_finite()) {
            return Err(DataError::InvalidRecord(format!(
                "trial {} candidate {}: se_hat must be positive, got {}",
                self.trial_id, self.candidate_id, self.se_hat
            )));
        }
        if !self.effect_hat.is_finite() {
            return Err(DataError::InvalidRecord(format!(
                "trial {} candidate {}: effect_hat is not finite",
                self.trial_id, self.candidate_id
            )));
        }
        if let Some(r) = self.rho {
            if !(r > -1.0 && r < 1.0) || self.is_clinical() {
                return Err(DataError::InvalidRecord(format!(
                    "trial {} candidate {}: rho must lie in (-1, 1) on a candidate row",
                    self.trial_id, self.candidate_id
                )));
            }
        }
        Ok(())
    }
}

/// An observed effect estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub effect: f64,
    pub se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub id: String,
    pub clinical: Option<Estimate>,
    pub candidates: BTreeMap<String, Estimate>,
}

/// The observed data over all trials. Trials keep their input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    trials: Vec<TrialEntry>,
    candidates: Vec<String>,
}

impl Dataset {
    pub fn trials(&self) -> &[TrialEntry] {
        &self.trials
    }

    /// Candidate ids in order of first appearance.
    pub fn candidates(&self) -> &[String] {
        &self.candidates
    }

    pub fn trial(&self, id: &str) -> Option<&TrialEntry> {
        self.trials.iter().find(|t| t.id == id)
    }

    pub fn trial_index(&self, id: &str) -> Option<usize> {
        self.trials.iter().position(|t| t.id == id)
    }

    /// Trials with a clinical summary.
    pub fn evaluation_trials(&self) -> Vec<&str> {
        self.trials
            .iter()
            .filter(|t| t.clinical.is_some())
            .map(|t| t.id.as_str())
            .collect()
    }

    /// Trials with candidate summaries only.
    pub fn prediction_trials(&self) -> Vec<&str> {
        self.trials
            .iter()
            .filter(|t| t.clinical.is_none())
            .map(|t| t.id.as_str())
            .collect()
    }

    pub fn summaries(&self) -> Vec<TrialSummary> {
        let mut out = Vec::new();
        for t in &self.trials {
            if let Some(c) = t.clinical {
                out.push(TrialSummary {
                    trial_id: t.id.clone(),
                    candidate_id: CLINICAL.to_string(),
                    effect_hat: c.effect,
                    se_hat: c.se,
                    rho: None,
                });
            }
            for (k, e) in self.candidates.iter().filter_map(|k| t.candidates.get(k).map(|e| (k, e))) {
                out.push(TrialSummary {
                    trial_id: t.id.clone(),
                    candidate_id: k.clone(),
                    effect_hat: e.effect,
                    se_hat: e.se,
                    rho: e.rho,
                });
            }
        }
        out
    }

    /// Copy with one trial's clinical summary replaced (or removed).
    pub fn with_clinical(&self, trial: &str, clinical: Option<Estimate>) -> Dataset {
        let mut out = self.clone();
        if let Some(t) = out.trials.iter_mut().find(|t| t.id == trial) {
            t.clinical = clinical;
        }
        out
    }

    /// Copy restricted to the named trials (in this dataset's order).
    pub fn subset(&self, trials: &BTreeSet<String>) -> Dataset {
        let kept: Vec<TrialEntry> = self
            .trials
            .iter()
            .filter(|t| trials.contains(&t.id))
            .cloned()
            .collect();
        let candidates = self
            .candidates
            .iter()
            .filter(|k| kept.iter().any(|t| t.candidates.contains_key(*k)))
            .cloned()
            .collect();
        Dataset { trials: kept, candidates }
    }
}

/// Build the dataset from summary rows.
pub fn assemble_dataset(summaries: &[TrialSummary]) -> Result<Dataset, DataError> {
    if summaries.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut trials: Vec<TrialEntry> = Vec::new();
    let mut candidates: Vec<String> = Vec::new();
    for s in summaries {
        s.validate()?;
        let idx = match trials.iter().position(|t| t.id == s.trial_id) {
            Some(i) => i,
            None => {
                trials.push(TrialEntry {
                    id: s.trial_id.clone(),
                    clinical: None,
                    candidates: BTreeMap::new(),
                });
                trials.len() - 1
            }
        };
        let entry = &mut trials[idx];
        let est = Estimate {
            effect: s.effect_hat,
            se: s.se_hat,
            rho: s.rho,
        };
        let duplicate = || DataError::DuplicateEntry {
            trial: s.trial_id.clone(),
            candidate: s.candidate_id.clone(),
        };
        if s.is_clinical() {
            if entry.clinical.is_some() {
                return Err(duplicate());
            }
            entry.clinical = Some(est);
        } else {
            if entry.candidates.insert(s.candidate_id.clone(), est).is_some() {
                return Err(duplicate());
            }
            if !candidates.contains(&s.candidate_id) {
                candidates.push(s.candidate_id.clone());
            }
        }
    }
    Ok(Dataset { trials, candidates })
}
