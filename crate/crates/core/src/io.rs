//! CSV formats.
//!
//! * datasets: `kind,first,second,value`, one observation per row, `kind` is
//!   `rating` or `comparison`, `second` is empty for ratings;
//! * ground truth: `entity,theta_dagger`;
//! * estimated scores: `entity,theta`;
//! * cluster assignments: `entity,cluster`.
//!
//! Entity indices are 0-based.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScoraError};
use crate::model::Dataset;

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRow {
    kind: String,
    first: usize,
    second: Option<usize>,
    value: f64,
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in &dataset.ratings {
        w.serialize(ObservationRow {
            kind: "rating".into(),
            first: r.entity,
            second: None,
            value: r.value,
        })?;
    }
    for c in &dataset.comparisons {
        w.serialize(ObservationRow {
            kind: "comparison".into(),
            first: c.first,
            second: Some(c.second),
            value: c.value,
        })?;
    }
    if dataset.is_empty() {
        w.write_record(["kind", "first", "second", "value"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut dataset = Dataset::new();
    for (line, row) in rd.deserialize::<ObservationRow>().enumerate() {
        let row = row?;
        match (row.kind.as_str(), row.second) {
            ("rating", None) => dataset.push_rating(row.first, row.value),
            ("comparison", Some(second)) => dataset.push_comparison(row.first, second, row.value),
            (kind, _) => {
                return Err(ScoraError::Parse(format!(
                    "row {}: kind '{kind}' does not match its 'second' field",
                    line + 2
                )))
            }
        }
    }
    Ok(dataset)
}

fn write_indexed<W: Write>(header: [&str; 2], values: impl IntoIterator<Item = String>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (i, v) in values.into_iter().enumerate() {
        w.write_record([i.to_string(), v])?;
    }
    w.flush()?;
    Ok(())
}

fn read_indexed<R: Read, T: std::str::FromStr>(reader: R, what: &str) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_reader(reader);
    let mut rows: Vec<(usize, T)> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let parse_err = || ScoraError::Parse(format!("malformed {what} row {:?}", rec));
        let entity = rec.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(parse_err)?;
        let value = rec.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(parse_err)?;
        rows.push((entity, value));
    }
    rows.sort_by_key(|(e, _)| *e);
    if rows.iter().enumerate().any(|(i, (e, _))| i != *e) {
        return Err(ScoraError::Parse(format!("{what} entities must be exactly 0..A")));
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

pub fn write_ground_truth<W: Write>(scores: &[f64], writer: W) -> Result<()> {
    write_indexed(["entity", "theta_dagger"], scores.iter().map(f64::to_string), writer)
}

pub fn read_ground_truth<R: Read>(reader: R) -> Result<Vec<f64>> {
    read_indexed(reader, "ground truth")
}

pub fn write_scores<W: Write>(scores: &[f64], writer: W) -> Result<()> {
    write_indexed(["entity", "theta"], scores.iter().map(f64::to_string), writer)
}

pub fn read_scores<R: Read>(reader: R) -> Result<Vec<f64>> {
    read_indexed(reader, "scores")
}

pub fn write_clusters<W: Write>(clusters: &[usize], writer: W) -> Result<()> {
    write_indexed(["entity", "cluster"], clusters.iter().map(usize::to_string), writer)
}

pub fn read_clusters<R: Read>(reader: R) -> Result<Vec<usize>> {
    read_indexed(reader, "cluster")
}
