//! Support for applying an evaluated surrogate in a new setting, judged from
//! the characteristics of the evaluation trials.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DataError;

/// Characteristic value: a set of labels or a closed numeric interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttributeValue {
    Interval([f64; 2]),
    Number(f64),
    Label(String),
    Labels(BTreeSet<String>),
}

impl AttributeValue {
    fn interval(&self) -> Option<(f64, f64)> {
        match *self {
            AttributeValue::Interval([lo, hi]) => Some((lo, hi)),
            AttributeValue::Number(v) => Some((v, v)),
            _ => None,
        }
    }

    fn labels(&self) -> Option<BTreeSet<&str>> {
        match self {
            AttributeValue::Label(l) => Some(std::iter::once(l.as_str()).collect()),
            AttributeValue::Labels(ls) => Some(ls.iter().map(String::as_str).collect()),
            _ => None,
        }
    }

    /// `self` (new setting) is covered by `other` (evaluation trial).
    fn covered_by(&self, other: &AttributeValue) -> bool {
        match (self.interval(), other.interval()) {
            (Some((lo, hi)), Some((olo, ohi))) => olo <= lo && hi <= ohi,
            (None, None) => {
                let mine = self.labels().unwrap_or_default();
                let theirs = other.labels().unwrap_or_default();
                mine.is_subset(&theirs)
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialCharacteristics {
    pub trial_id: String,
    pub attributes: BTreeMap<String, AttributeValue>,
}

impl TrialCharacteristics {
    pub fn validate(&self) -> Result<(), DataError> {
        for (name, v) in &self.attributes {
            if let Some((lo, hi)) = v.interval() {
                if !(lo <= hi) {
                    return Err(DataError::InvalidRecord(format!(
                        "trial {}: attribute {name} has lo > hi",
                        self.trial_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered from strongest to weakest support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    Exact,
    Represented,
    WithinRange,
    OutsideRange,
}

/// Classify the support for a new setting. Overlapping but non-nested
/// intervals count as unmatched; they are then judged against the hull
/// `[min lo, max hi]` of the evaluation intervals.
pub fn classify_generalizability(
    new: &TrialCharacteristics,
    evaluation: &[TrialCharacteristics],
) -> Result<Support, DataError> {
    new.validate()?;
    for e in evaluation {
        e.validate()?;
    }
    for name in new.attributes.keys() {
        if !evaluation.iter().any(|e| e.attributes.contains_key(name)) {
            return Err(DataError::VocabularyMismatch(name.clone()));
        }
    }
    let matches = |e: &TrialCharacteristics, name: &str, v: &AttributeValue| {
        e.attributes.get(name).is_some_and(|ev| v.covered_by(ev))
    };
    if evaluation
        .iter()
        .any(|e| new.attributes.iter().all(|(n, v)| matches(e, n, v)))
    {
        return Ok(Support::Exact);
    }
    let mut all_represented = true;
    let mut in_range = true;
    for (name, v) in &new.attributes {
        if evaluation.iter().any(|e| matches(e, name, v)) {
            continue;
        }
        all_represented = false;
        match v.interval() {
            Some((lo, hi)) => {
                let hull = evaluation
                    .iter()
                    .filter_map(|e| e.attributes.get(name).and_then(AttributeValue::interval))
                    .fold(None, |acc: Option<(f64, f64)>, (l, h)| match acc {
                        None => Some((l, h)),
                        Some((al, ah)) => Some((al.min(l), ah.max(h))),
                    });
                if !hull.is_some_and(|(hl, hh)| hl <= lo && hi <= hh) {
                    in_range = false;
                }
            }
            None => in_range = false,
        }
    }
    Ok(if all_represented {
        Support::Represented
    } else if in_range {
        Support::WithinRange
    } else {
        Support::OutsideRange
    })
}
