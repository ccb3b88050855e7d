//! Measurement CSV (`patient_id,<method1>,…,<methodK>`) and the truth
//! sidecar (`patient_id,true_value`).

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::open_for_read;
use crate::error::{NgseError, Result};
use crate::model_types::MeasurementSet;

/// Where a measurement set came from and how it was transformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// `v → (v - lo) / (hi - lo)` applied at ingestion.
    pub rescale: Option<[f64; 2]>,
}

/// Parses a measurement CSV. Row numbers in errors count data rows from 1;
/// columns count from 1 with the patient id in column 1.
pub fn read_measurements(path: &Path, rescale: Option<[f64; 2]>) -> Result<(MeasurementSet, Provenance)> {
    let file = open_for_read(path)?;
    let data = parse_measurements(file, rescale)?;
    Ok((
        data,
        Provenance {
            source: path.display().to_string(),
            rescale,
        },
    ))
}

pub fn parse_measurements<R: std::io::Read>(reader: R, rescale: Option<[f64; 2]>) -> Result<MeasurementSet> {
    if let Some([lo, hi]) = rescale {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(NgseError::Config(format!("rescale interval [{lo}, {hi}] needs lo < hi")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(0, 0, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(NgseError::Parse {
            row: 0,
            column: header.len().max(1),
            message: "header needs patient_id and at least one method column".into(),
        });
    }
    let methods: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let k = methods.len();

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| parse_error(row, 0, e.to_string()))?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != k + 1 {
            return Err(NgseError::RaggedRows {
                row,
                expected: k + 1,
                got: record.len(),
            });
        }
        ids.push(record[0].to_owned());
        for (j, cell) in record.iter().enumerate().skip(1) {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(row, j + 1, format!("{cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(row, j + 1, format!("{cell:?} is not finite")));
            }
            values.push(match rescale {
                Some([lo, hi]) => (v - lo) / (hi - lo),
                None => v,
            });
        }
    }
    if ids.is_empty() {
        return Err(NgseError::EmptyData);
    }
    let matrix = DMatrix::from_row_slice(ids.len(), k, &values);
    MeasurementSet::new(matrix, methods, ids)
}

fn parse_error(row: usize, column: usize, message: String) -> NgseError {
    NgseError::Parse { row, column, message }
}

pub fn write_measurements<W: Write>(data: &MeasurementSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["patient_id".to_owned()];
    header.extend(data.method_names().iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (p, id) in data.patient_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(data.values().row(p).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truths<W: Write>(ids: &[String], truths: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["patient_id", "true_value"]).map_err(csv_io)?;
    for (id, a) in ids.iter().zip(truths) {
        w.write_record([id.as_str(), &format!("{a:?}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truths(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_reader(open_for_read(path)?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| parse_error(i + 1, 0, e.to_string()))?;
        let v: f64 = rec
            .get(1)
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| parse_error(i + 1, 2, "bad true_value".into()))?;
        out.push((rec.get(0).unwrap_or_default().to_owned(), v));
    }
    Ok(out)
}

fn csv_io(e: csv::Error) -> NgseError {
    NgseError::Io(std::io::Error::other(e))
}
