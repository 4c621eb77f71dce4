use std::collections::HashSet;

use thiserror::Error;

use crate::stats::{DataMatrix, StatsError, SubgroupData};
use crate::survey::validate_id;

/// A named numeric table: header row of column names, one observation (or
/// one subgroup) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("invalid dataset id: {0}")]
    InvalidId(String),
    #[error("missing header row")]
    MissingHeader,
    #[error("dataset has no data rows")]
    NoRows,
    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),
    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),
    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    Ragged {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("non-numeric value {value:?} at line {line}, column {column:?}")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("non-finite value at line {line}, column {column:?}")]
    NonFinite { line: u64, column: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        validate_id(&id).map_err(DatasetError::InvalidId)?;
        check_columns(&columns)?;
        if rows.is_empty() {
            return Err(DatasetError::NoRows);
        }
        for (i, row) in rows.iter().enumerate() {
            let line = i as u64 + 2;
            if row.len() != columns.len() {
                return Err(DatasetError::Ragged {
                    line,
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    line,
                    column: columns[c].clone(),
                });
            }
        }
        Ok(Self { id, columns, rows })
    }

    /// Parses comma-separated UTF-8 text with a header row and period
    /// decimal separator. Line numbers in errors count the header as line 1.
    pub fn from_csv(id: impl Into<String>, text: &str) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| DatasetError::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(DatasetError::MissingHeader);
        }
        check_columns(&columns)?;

        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DatasetError::Csv(e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() == 1 && record[0].is_empty() && columns.len() > 1 {
                continue;
            }
            if record.len() != columns.len() {
                return Err(DatasetError::Ragged {
                    line,
                    expected: columns.len(),
                    found: record.len(),
                });
            }
            let row = record
                .iter()
                .zip(&columns)
                .map(|(cell, column)| match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(DatasetError::NonFinite {
                        line,
                        column: column.clone(),
                    }),
                    Err(_) => Err(DatasetError::NonNumeric {
                        line,
                        column: column.clone(),
                        value: cell.to_string(),
                    }),
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Self::new(id, columns, rows)
    }

    /// CSV text that [`Dataset::from_csv`] reads back exactly (Rust's float
    /// formatting is shortest round-trip).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    /// Rows as subgroups for the X-bar/R chart, restricted to `columns`
    /// when given.
    pub fn to_subgroups(&self, columns: &[usize]) -> Result<SubgroupData, StatsError> {
        SubgroupData::new(self.select(columns))
    }

    pub fn to_data_matrix(&self, columns: &[usize]) -> Result<DataMatrix, StatsError> {
        let names = if columns.is_empty() {
            self.columns.clone()
        } else {
            columns.iter().map(|&c| self.columns[c].clone()).collect()
        };
        DataMatrix::new(names, self.select(columns))
    }

    fn select(&self, columns: &[usize]) -> Vec<Vec<f64>> {
        if columns.is_empty() {
            return self.rows.clone();
        }
        self.rows
            .iter()
            .map(|r| columns.iter().map(|&c| r[c]).collect())
            .collect()
    }
}

fn check_columns(columns: &[String]) -> Result<(), DatasetError> {
    let mut seen = HashSet::new();
    for (i, c) in columns.iter().enumerate() {
        if c.is_empty() {
            return Err(DatasetError::EmptyColumnName(i));
        }
        if !seen.insert(c) {
            return Err(DatasetError::DuplicateColumn(c.clone()));
        }
    }
    Ok(())
}
