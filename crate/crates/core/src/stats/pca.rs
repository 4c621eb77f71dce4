//! Principal component analysis through the symmetric eigendecomposition of
//! the sample covariance (or correlation) matrix.

use serde::{Deserialize, Serialize};

use super::linalg::{eigen_sym, Matrix};
use super::{shifted_mean, StatsError};

/// `n_obs × p_vars` finite observations with variable names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    names: Vec<String>,
    values: Matrix,
}

impl DataMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if names.is_empty() {
            return Err(StatsError::NoVariables);
        }
        if rows.len() < 2 {
            return Err(StatsError::TooFewObservations {
                needed: 2,
                found: rows.len(),
            });
        }
        for (row, values) in rows.iter().enumerate() {
            if values.len() != names.len() {
                return Err(StatsError::RaggedRows {
                    row,
                    expected: names.len(),
                    found: values.len(),
                });
            }
            if let Some(c) = values.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFiniteCell {
                    row,
                    column: names[c].clone(),
                });
            }
        }
        Ok(Self {
            names,
            values: Matrix::from_rows(&rows),
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_obs(&self) -> usize {
        self.values.rows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.cols()
    }

    fn column_moments(&self) -> Vec<(f64, f64)> {
        let n = self.n_obs() as f64;
        (0..self.n_vars())
            .map(|c| {
                let col = self.values.column(c);
                let mean = shifted_mean(&col);
                let ss: f64 = col.iter().map(|x| (x - mean).powi(2)).sum();
                (mean, (ss / (n - 1.0)).sqrt())
            })
            .collect()
    }

    fn centered(&self, moments: &[(f64, f64)], scale: bool) -> Matrix {
        let mut out = self.values.clone();
        for r in 0..out.rows() {
            for (c, &(mean, sd)) in moments.iter().enumerate() {
                let centered = out[(r, c)] - mean;
                out[(r, c)] = if scale { centered / sd } else { centered };
            }
        }
        out
    }
}

/// Rescales every column to sample mean 0 and sample standard deviation 1.
pub fn standardize(data: &DataMatrix) -> Result<DataMatrix, StatsError> {
    let moments = data.column_moments();
    if let Some(c) = moments.iter().position(|&(_, sd)| sd == 0.0) {
        return Err(StatsError::ConstantColumn(data.names[c].clone()));
    }
    Ok(DataMatrix {
        names: data.names.clone(),
        values: data.centered(&moments, true),
    })
}

/// Sample covariance matrix (divisor `n − 1`), symmetric by construction.
pub fn covariance_matrix(data: &DataMatrix) -> Result<Matrix, StatsError> {
    if data.n_obs() < 2 {
        return Err(StatsError::TooFewObservations {
            needed: 2,
            found: data.n_obs(),
        });
    }
    Ok(cross_products(&data.centered(&data.column_moments(), false)))
}

/// `XᵀX / (n − 1)` for already-centered `X`, filling the upper triangle and
/// mirroring it.
fn cross_products(x: &Matrix) -> Matrix {
    let p = x.cols();
    let denom = (x.rows() - 1) as f64;
    let mut cov = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let s: f64 = (0..x.rows()).map(|r| x[(r, i)] * x[(r, j)]).sum();
            cov[(i, j)] = s / denom;
            cov[(j, i)] = s / denom;
        }
    }
    cov
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaMode {
    Covariance,
    /// Standardized variables; the usual choice for mixed units.
    #[default]
    Correlation,
}

#[derive(Debug, Clone, Serialize)]
pub struct PcaResult {
    pub mode: PcaMode,
    pub variables: Vec<String>,
    pub n_obs: usize,
    /// Non-increasing, non-negative.
    pub eigenvalues: Vec<f64>,
    /// Share of total variance per component; sums to 1.
    pub explained: Vec<f64>,
    /// `p × p`; column `k` holds the unit loading vector of component `k`.
    pub loadings: Matrix,
    /// `n × p` projections of the centered (or standardized) data.
    pub scores: Matrix,
    pub means: Vec<f64>,
    /// Column standard deviations used for scaling (correlation mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

/// Negative eigenvalues no larger than this share of the trace are round-off.
const NEGATIVE_CLAMP: f64 = 1e-10;

pub fn pca(data: &DataMatrix, mode: PcaMode) -> Result<PcaResult, StatsError> {
    let moments = data.column_moments();
    let scaled = mode == PcaMode::Correlation;
    if scaled {
        if let Some(c) = moments.iter().position(|&(_, sd)| sd == 0.0) {
            return Err(StatsError::ConstantColumn(data.names[c].clone()));
        }
    }
    let x = data.centered(&moments, scaled);
    let analyzed = cross_products(&x);
    let trace = analyzed.trace();
    if trace <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }

    let eig = eigen_sym(&analyzed)?;
    let eigenvalues = eig
        .values
        .iter()
        .map(|&l| {
            if l >= 0.0 {
                Ok(l)
            } else if -l <= NEGATIVE_CLAMP * trace {
                Ok(0.0)
            } else {
                Err(StatsError::NotPositiveSemidefinite(l))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let total: f64 = eigenvalues.iter().sum();
    let explained = eigenvalues.iter().map(|l| l / total).collect();
    let scores = x.matmul(&eig.vectors);

    Ok(PcaResult {
        mode,
        variables: data.names.clone(),
        n_obs: data.n_obs(),
        eigenvalues,
        explained,
        loadings: eig.vectors,
        scores,
        means: moments.iter().map(|m| m.0).collect(),
        scales: scaled.then(|| moments.iter().map(|m| m.1).collect()),
    })
}
