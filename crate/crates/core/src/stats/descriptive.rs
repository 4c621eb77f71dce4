//! Frequency tables, seven-number summaries, cross tabulations and Likert
//! profiles.
//!
//! Conventions: standard deviation uses the `n - 1` divisor; quartiles use
//! linear interpolation between closest ranks (position `(n - 1) * p` in the
//! sorted sample, the "type 7" rule). Non-finite input is an error.

use std::collections::HashMap;

use serde::Serialize;

use super::{shifted_mean, StatsError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyTable {
    pub categories: Vec<String>,
    pub counts: Vec<u64>,
    /// `counts / total`; empty when `total == 0`.
    pub proportions: Vec<f64>,
    pub total: u64,
}

impl FrequencyTable {
    fn from_counts(categories: Vec<String>, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let proportions = if total == 0 {
            Vec::new()
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        Self {
            categories,
            counts,
            proportions,
            total,
        }
    }

    pub fn count_of(&self, category: &str) -> Option<u64> {
        self.categories
            .iter()
            .position(|c| c == category)
            .map(|i| self.counts[i])
    }
}

/// Counts categories in first-appearance order.
pub fn frequency_table<S: AsRef<str>>(values: &[S]) -> FrequencyTable {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut categories = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    for v in values {
        let v = v.as_ref();
        let i = *index.entry(v).or_insert_with(|| {
            categories.push(v.to_string());
            counts.push(0);
            counts.len() - 1
        });
        counts[i] += 1;
    }
    FrequencyTable::from_counts(categories, counts)
}

/// Counts values against a declared category list, keeping declared order
/// and zero counts.
pub fn frequency_table_with_categories<S: AsRef<str>>(
    categories: &[String],
    values: &[S],
) -> Result<FrequencyTable, StatsError> {
    let index: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut counts = vec![0u64; categories.len()];
    for v in values {
        let i = index
            .get(v.as_ref())
            .ok_or_else(|| StatsError::UnknownCategory {
                value: v.as_ref().to_string(),
            })?;
        counts[*i] += 1;
    }
    Ok(FrequencyTable::from_counts(categories.to_vec(), counts))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; `None` for a single value.
    pub sd: Option<f64>,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let n = values.len();
    let mean = shifted_mean(values);
    let sd = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        n,
        mean,
        sd,
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Contingency table with margins. `cells[r][c]` counts pairs with row label
/// `row_labels[r]` and column label `col_labels[c]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossTab {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<u64>>,
    pub row_totals: Vec<u64>,
    pub col_totals: Vec<u64>,
    pub total: u64,
}

impl CrossTab {
    pub fn cell(&self, row: &str, col: &str) -> Option<u64> {
        let r = self.row_labels.iter().position(|l| l == row)?;
        let c = self.col_labels.iter().position(|l| l == col)?;
        Some(self.cells[r][c])
    }
}

/// Cross tabulation with both label sets in first-appearance order.
pub fn cross_tab<R: AsRef<str>, C: AsRef<str>>(pairs: &[(R, C)]) -> CrossTab {
    let rows = frequency_table(&pairs.iter().map(|(r, _)| r.as_ref()).collect::<Vec<_>>());
    let cols = frequency_table(&pairs.iter().map(|(_, c)| c.as_ref()).collect::<Vec<_>>());
    cross_tab_with_categories(&rows.categories, &cols.categories, pairs)
        .expect("labels were collected from the pairs themselves")
}

/// Cross tabulation against declared row and column categories.
pub fn cross_tab_with_categories<R: AsRef<str>, C: AsRef<str>>(
    row_labels: &[String],
    col_labels: &[String],
    pairs: &[(R, C)],
) -> Result<CrossTab, StatsError> {
    let find = |labels: &[String], v: &str| {
        labels
            .iter()
            .position(|l| l == v)
            .ok_or_else(|| StatsError::UnknownCategory { value: v.to_string() })
    };
    let mut cells = vec![vec![0u64; col_labels.len()]; row_labels.len()];
    for (r, c) in pairs {
        let ri = find(row_labels, r.as_ref())?;
        let ci = find(col_labels, c.as_ref())?;
        cells[ri][ci] += 1;
    }
    let row_totals: Vec<u64> = cells.iter().map(|row| row.iter().sum()).collect();
    let col_totals: Vec<u64> = (0..col_labels.len())
        .map(|c| cells.iter().map(|row| row[c]).sum())
        .collect();
    Ok(CrossTab {
        row_labels: row_labels.to_vec(),
        col_labels: col_labels.to_vec(),
        total: row_totals.iter().sum(),
        cells,
        row_totals,
        col_totals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikertProfile {
    /// Always the five categories "1".."5".
    pub frequencies: FrequencyTable,
    /// `None` when there are no answers.
    pub summary: Option<SummaryStats>,
}

pub fn likert_categories() -> Vec<String> {
    (1..=5).map(|v: u8| v.to_string()).collect()
}

pub fn likert_profile(values: &[u8]) -> Result<LikertProfile, StatsError> {
    if let Some(index) = values.iter().position(|v| !(1..=5).contains(v)) {
        return Err(StatsError::LikertOutOfRange {
            index,
            value: values[index],
        });
    }
    let mut counts = vec![0u64; 5];
    for &v in values {
        counts[usize::from(v) - 1] += 1;
    }
    let numeric: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
    Ok(LikertProfile {
        frequencies: FrequencyTable::from_counts(likert_categories(), counts),
        summary: if numeric.is_empty() {
            None
        } else {
            Some(summary_stats(&numeric)?)
        },
    })
}
