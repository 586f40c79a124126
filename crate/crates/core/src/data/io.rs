//! File formats for subject records, trial summaries and trial characteristics.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{DataError, SubjectRecord, TrialCharacteristics, TrialSummary};

const SUBJECT_FIXED: [&str; 4] = ["trial_id", "arm", "exposure", "outcome"];

fn parse_opt(field: &str, column: &str, line: usize) -> Result<Option<f64>, DataError> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    f.parse::<f64>().map(Some).map_err(|_| {
        DataError::InvalidRecord(format!("line {line}: column {column}: cannot parse {f:?}"))
    })
}

/// Read `trial_id,arm,exposure,outcome,<candidate columns...>`; empty cells
/// are missing values.
pub fn read_subjects<R: Read>(reader: R) -> Result<Vec<SubjectRecord>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for (i, name) in SUBJECT_FIXED.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(DataError::InvalidRecord(format!(
                "subject header must start with {}",
                SUBJECT_FIXED.join(",")
            )));
        }
    }
    let markers: Vec<String> = headers.iter().skip(4).map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let arm = match row.get(1).map(str::trim) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(DataError::InvalidRecord(format!(
                    "line {line}: arm must be 0 or 1, got {other:?}"
                )))
            }
        };
        let mut m = BTreeMap::new();
        for (c, name) in markers.iter().enumerate() {
            if let Some(v) = parse_opt(row.get(4 + c).unwrap_or(""), name, line)? {
                m.insert(name.clone(), v);
            }
        }
        let rec = SubjectRecord {
            trial_id: row.get(0).unwrap_or("").to_string(),
            arm,
            exposure: parse_opt(row.get(2).unwrap_or(""), "exposure", line)?,
            outcome: parse_opt(row.get(3).unwrap_or(""), "outcome", line)?,
            markers: m,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Marker column names of a subject CSV, in header order.
pub fn subject_markers<R: Read>(reader: R) -> Result<Vec<String>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    Ok(rdr.headers()?.iter().skip(4).map(str::to_string).collect())
}

pub fn write_subjects<W: Write>(
    writer: W,
    markers: &[String],
    records: &[SubjectRecord],
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = SUBJECT_FIXED.to_vec();
    header.extend(markers.iter().map(String::as_str));
    w.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        let mut row = vec![
            r.trial_id.clone(),
            r.arm.to_string(),
            cell(r.exposure),
            cell(r.outcome),
        ];
        row.extend(markers.iter().map(|m| cell(r.markers.get(m).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read `trial_id,candidate_id,effect_hat,se_hat[,rho]`.
pub fn read_summaries<R: Read>(reader: R) -> Result<Vec<TrialSummary>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["trial_id", "candidate_id", "effect_hat", "se_hat"];
    let ok = headers.iter().take(4).eq(expected.iter().copied())
        && (headers.len() == 4 || (headers.len() == 5 && &headers[4] == "rho"));
    if !ok {
        return Err(DataError::InvalidRecord(
            "summary header must be trial_id,candidate_id,effect_hat,se_hat[,rho]".into(),
        ));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let req = |c: usize, name: &str| -> Result<f64, DataError> {
            parse_opt(row.get(c).unwrap_or(""), name, line)?.ok_or_else(|| {
                DataError::InvalidRecord(format!("line {line}: {name} is required"))
            })
        };
        out.push(TrialSummary {
            trial_id: row.get(0).unwrap_or("").to_string(),
            candidate_id: row.get(1).unwrap_or("").to_string(),
            effect_hat: req(2, "effect_hat")?,
            se_hat: req(3, "se_hat")?,
            rho: parse_opt(row.get(4).unwrap_or(""), "rho", line)?,
        });
    }
    Ok(out)
}

pub fn write_summaries<W: Write>(writer: W, rows: &[TrialSummary]) -> Result<(), DataError> {
    let with_rho = rows.iter().any(|r| r.rho.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["trial_id", "candidate_id", "effect_hat", "se_hat"];
    if with_rho {
        header.push("rho");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut row = vec![
            r.trial_id.clone(),
            r.candidate_id.clone(),
            r.effect_hat.to_string(),
            r.se_hat.to_string(),
        ];
        if with_rho {
            row.push(r.rho.map(|x| x.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSON map `trial_id -> {attribute: value | [lo, hi] | [labels]}`.
pub fn read_characteristics<R: Read>(reader: R) -> Result<Vec<TrialCharacteristics>, DataError> {
    let raw: BTreeMap<String, BTreeMap<String, super::AttributeValue>> =
        serde_json::from_reader(reader)?;
    let out: Vec<TrialCharacteristics> = raw
        .into_iter()
        .map(|(trial_id, attributes)| TrialCharacteristics { trial_id, attributes })
        .collect();
    for c in &out {
        c.validate()?;
    }
    Ok(out)
}
