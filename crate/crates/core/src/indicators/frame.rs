use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};

use super::{IndicatorError, Result};
use crate::classifiers::{Dataset, FeatureMatrix};
use crate::market_data::parse_date;
use crate::{DateRange, Matrix};

/// Time-indexed named feature columns with aligned binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    timestamps: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl FeatureFrame {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        let n = timestamps.len();
        if names.len() != columns.len() {
            return Err(IndicatorError::Format("names/columns length mismatch".into()));
        }
        if labels.len() != n || columns.iter().any(|c| c.len() != n) {
            return Err(IndicatorError::Format("column length differs from index".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IndicatorError::Format("timestamps not strictly increasing".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name) {
                return Err(IndicatorError::DuplicateColumn(name.clone()));
            }
        }
        for (name, col) in names.iter().zip(&columns) {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(IndicatorError::NonFinite {
                    column: name.clone(),
                    date: timestamps[i],
                });
            }
        }
        Ok(Self {
            timestamps,
            names,
            columns,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn timestamps(&self) -> &[NaiveDate] {
        &self.timestamps
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[j])
    }

    /// Row indices whose timestamp lies in `range`.
    pub fn rows_in(&self, range: &DateRange) -> Vec<usize> {
        self.timestamps
            .iter()
            .enumerate()
            .filter(|(_, t)| range.contains(**t))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn matrix(&self, rows: &[usize]) -> FeatureMatrix {
        let mut m = Matrix::zeros(rows.len(), self.n_cols());
        for (r, &i) in rows.iter().enumerate() {
            for (j, col) in self.columns.iter().enumerate() {
                m.set(r, j, col[i]);
            }
        }
        FeatureMatrix::new(self.names.clone(), m).expect("frame names are unique")
    }

    pub fn dataset(&self, rows: &[usize]) -> Dataset {
        let x = self.matrix(rows);
        let y = rows.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(x, y).expect("frame rows are aligned")
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureFrame {
        FeatureFrame {
            timestamps: rows.iter().map(|&i| self.timestamps[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Writes `timestamp,<columns...>,label` with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("label".into());
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = Vec::with_capacity(self.n_cols() + 2);
            rec.push(self.timestamps[i].to_string());
            for c in &self.columns {
                rec.push(c[i].to_string());
            }
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let k = header.len();
        if k < 2 || &header[0] != "timestamp" || &header[k - 1] != "label" {
            return Err(IndicatorError::Format(
                "expected header `timestamp,...,label`".into(),
            ));
        }
        let names: Vec<String> = header.iter().skip(1).take(k - 2).map(String::from).collect();
        let mut timestamps = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| IndicatorError::Format(format!("line {}: bad {what}", line + 2));
            timestamps.push(parse_date(&rec[0]).ok_or_else(|| bad("timestamp"))?);
            for (j, col) in columns.iter_mut().enumerate() {
                col.push(rec[j + 1].parse::<f64>().map_err(|_| bad(&names[j]))?);
            }
            labels.push(rec[k - 1].parse::<u8>().map_err(|_| bad("label"))?);
        }
        Self::new(timestamps, names, columns, labels)
    }
}

/// A named, date-keyed series to append to a frame (e.g. a sentiment score).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalColumn {
    pub name: String,
    pub values: BTreeMap<NaiveDate, f64>,
}

/// Appends external columns by date. Rows lacking a value in any extra
/// column are dropped; returns the new frame and the dropped-row count.
pub fn attach_external_columns(
    frame: &FeatureFrame,
    extra: &[ExternalColumn],
) -> Result<(FeatureFrame, usize)> {
    let mut names = frame.names.clone();
    for e in extra {
        if names.contains(&e.name) {
            return Err(IndicatorError::DuplicateColumn(e.name.clone()));
        }
        names.push(e.name.clone());
    }
    let keep: Vec<usize> = (0..frame.n_rows())
        .filter(|&i| {
            extra.iter().all(|e| {
                e.values
                    .get(&frame.timestamps[i])
                    .is_some_and(|v| v.is_finite())
            })
        })
        .collect();
    let dropped = frame.n_rows() - keep.len();
    if dropped > 0 {
        info!("attach_external_columns: dropped {dropped} rows without external values");
    }
    let base = frame.select_rows(&keep);
    let mut columns = base.columns;
    for e in extra {
        columns.push(base.timestamps.iter().map(|t| e.values[t]).collect());
    }
    let out = FeatureFrame::new(base.timestamps, names, columns, base.labels)?;
    Ok((out, dropped))
}

/// Reads `timestamp,<name...>` columns; empty cells are missing.
pub fn read_external_csv<R: Read>(reader: R) -> Result<Vec<ExternalColumn>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || &header[0] != "timestamp" {
        return Err(IndicatorError::Format("expected leading `timestamp` column".into()));
    }
    let mut cols: Vec<ExternalColumn> = header
        .iter()
        .skip(1)
        .map(|n| ExternalColumn {
            name: n.to_string(),
            values: BTreeMap::new(),
        })
        .collect();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || IndicatorError::Format(format!("line {}: bad value", line + 2));
        let t = parse_date(&rec[0]).ok_or_else(bad)?;
        for (j, c) in cols.iter_mut().enumerate() {
            let raw = rec.get(j + 1).unwrap_or("");
            if raw.is_empty() {
                continue;
            }
            c.values.insert(t, raw.parse().map_err(|_| bad())?);
        }
    }
    Ok(cols)
}
