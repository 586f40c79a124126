use serde::{Deserialize, Serialize};

use super::{Mode, ModelError, ModelSpec};
use crate::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub effect: f64,
    pub se: f64,
    pub rho: Option<f64>,
}

/// The rows a single fit is allowed to see. Excluded rows are absent, not
/// masked, so a fit cannot read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetView {
    pub trials: Vec<String>,
    /// Clinical row per trial.
    pub clinical: Vec<Option<Observation>>,
    pub candidates: Vec<String>,
    /// Candidate rows, indexed `[candidate][trial]`.
    pub markers: Vec<Vec<Option<Observation>>>,
}

impl DatasetView {
    pub fn n_trials(&self) -> usize {
        self.trials.len()
    }

    pub fn trial_index(&self, id: &str) -> Option<usize> {
        self.trials.iter().position(|t| t == id)
    }

    /// Number of candidate rows present.
    pub fn candidate_rows(&self) -> usize {
        self.markers.iter().flatten().filter(|o| o.is_some()).count()
    }

    pub fn clinical_rows(&self) -> usize {
        self.clinical.iter().filter(|o| o.is_some()).count()
    }

    /// Index of the candidate in `trial` whose row carries a correlation
    /// with the clinical row, if that row is present.
    pub fn correlated_candidate(&self, trial: usize) -> Option<usize> {
        self.clinical[trial]?;
        (0..self.candidates.len())
            .find(|&k| self.markers[k][trial].is_some_and(|o| o.rho.is_some()))
    }
}

/// Restrict `dataset` to what `spec.mode` allows.
pub fn build_view(dataset: &Dataset, spec: &ModelSpec) -> Result<DatasetView, ModelError> {
    spec.validate()?;
    let left_out = spec.mode.left_out();
    if let Some(j) = left_out {
        let t = dataset
            .trial(j)
            .ok_or_else(|| ModelError::Config(format!("unknown trial {j}")))?;
        if t.clinical.is_none() {
            return Err(ModelError::Config(format!(
                "trial {j} has no clinical row to leave out"
            )));
        }
    }
    for k in &spec.candidates {
        if !dataset.candidates().contains(k) {
            return Err(ModelError::Config(format!("unknown candidate {k}")));
        }
    }
    let to_obs = |e: &crate::data::Estimate| Observation {
        effect: e.effect,
        se: e.se,
        rho: e.rho,
    };
    let mut view = DatasetView {
        trials: Vec::new(),
        clinical: Vec::new(),
        candidates: spec.candidates.clone(),
        markers: vec![Vec::new(); spec.candidates.len()],
    };
    for t in dataset.trials() {
        let is_left_out = left_out == Some(t.id.as_str());
        let clinical = if is_left_out { None } else { t.clinical.map(|c| to_obs(&c)) };
        let rows: Vec<Option<Observation>> = spec
            .candidates
            .iter()
            .map(|k| t.candidates.get(k).map(to_obs))
            .collect();
        let include = is_left_out || clinical.is_some() || rows.iter().any(Option::is_some);
        if !include {
            continue;
        }
        let rho_rows = rows.iter().flatten().filter(|o| o.rho.is_some()).count();
        if clinical.is_some() && rho_rows > 1 {
            return Err(ModelError::Config(format!(
                "trial {}: bivariate likelihood supports one correlated candidate",
                t.id
            )));
        }
        view.trials.push(t.id.clone());
        view.clinical.push(clinical);
        for (k, r) in rows.into_iter().enumerate() {
            view.markers[k].push(r);
        }
    }
    if matches!(spec.mode, Mode::Null | Mode::NullLoo(_)) {
        debug_assert_eq!(view.candidate_rows(), 0);
    }
    Ok(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_dataset, TrialSummary, CLINICAL};

    fn dataset() -> Dataset {
        let mut rows = Vec::new();
        for j in 0..4 {
            let id = format!("t{j}");
            rows.push(TrialSummary::new(&id, CLINICAL, -(j as f64), 0.2));
            rows.push(TrialSummary::new(&id, "k", j as f64, 0.1));
        }
        rows.push(TrialSummary::new("new", "k", 1.5, 0.1));
        assemble_dataset(&rows).unwrap()
    }

    #[test]
    fn loo_excludes_clinical_keeps_candidate() {
        let d = dataset();
        let spec = ModelSpec::new(Mode::Loo("t2".into()), &["k".into()]);
        let v = build_view(&d, &spec).unwrap();
        let j = v.trial_index("t2").unwrap();
        assert!(v.clinical[j].is_none());
        assert!(v.markers[0][j].is_some());
        assert_eq!(v.n_trials(), 5);
        let perturbed = d.with_clinical(
            "t2",
            Some(crate::data::Estimate { effect: 99.0, se: 5.0, rho: None }),
        );
        assert_eq!(build_view(&perturbed, &spec).unwrap(), v);
    }

    #[test]
    fn null_views_have_no_candidate_rows() {
        let d = dataset();
        let v = build_view(&d, &ModelSpec::new(Mode::NullLoo("t0".into()), &["k".into()])).unwrap();
        assert_eq!(v.candidate_rows(), 0);
        assert!(v.candidates.is_empty());
        assert_eq!(v.n_trials(), 4);
        assert_eq!(v.clinical_rows(), 3);
        let v = build_view(&d, &ModelSpec::new(Mode::Null, &[])).unwrap();
        assert_eq!(v.n_trials(), 4);
    }

    #[test]
    fn rejects_unknowns() {
        let d = dataset();
        assert!(build_view(&d, &ModelSpec::new(Mode::Loo("zz".into()), &["k".into()])).is_err());
        assert!(build_view(&d, &ModelSpec::new(Mode::Loo("new".into()), &["k".into()])).is_err());
        assert!(build_view(&d, &ModelSpec::new(Mode::Full, &["q".into()])).is_err());
    }
}
