//! Shewhart X-bar and R charts over rational subgroups.
//!
//! Limits are estimated from the data: `X̄̄ ± A2·R̄` for subgroup means and
//! `[D3·R̄, D4·R̄]` for subgroup ranges. The chart factors derive from `d2`
//! and `d3`, the mean and standard deviation of the range of `n` independent
//! standard normal draws, which are obtained here by numerical integration
//! rather than copied from a printed table.
//!
//! A point lying exactly on a limit is in control: violations are strict.

use std::sync::OnceLock;

use serde::Serialize;
use statrs::function::erf::erfc;

use super::{shifted_mean, StatsError};

pub const MIN_SUBGROUP_SIZE: usize = 2;
pub const MAX_SUBGROUP_SIZE: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlConstants {
    pub n: usize,
    /// E[R] / σ for subgroups of size `n`.
    pub d2: f64,
    /// sd(R) / σ.
    pub d3: f64,
    /// 3 / (d2 √n)
    pub a2: f64,
    /// max(0, 1 − 3·d3/d2)
    pub d3_factor: f64,
    /// 1 + 3·d3/d2
    pub d4_factor: f64,
}

pub fn control_constants(n: usize) -> Result<ControlConstants, StatsError> {
    static TABLE: OnceLock<Vec<OnceLock<ControlConstants>>> = OnceLock::new();
    if !(MIN_SUBGROUP_SIZE..=MAX_SUBGROUP_SIZE).contains(&n) {
        return Err(StatsError::UnsupportedSubgroupSize(n));
    }
    let table = TABLE.get_or_init(|| (0..=MAX_SUBGROUP_SIZE).map(|_| OnceLock::new()).collect());
    Ok(*table[n].get_or_init(|| {
        let (d2, d3) = range_moments(n);
        let ratio = 3.0 * d3 / d2;
        ControlConstants {
            n,
            d2,
            d3,
            a2: 3.0 / (d2 * (n as f64).sqrt()),
            d3_factor: (1.0 - ratio).max(0.0),
            d4_factor: 1.0 + ratio,
        }
    }))
}

// Quadrature grid. Φ is tabulated once on a uniform grid so that Φ(x + r)
// for grid points x and r is a table lookup.
const STEP: f64 = 0.005;
const X_HALF_WIDTH: f64 = 8.5;
const R_MAX: f64 = 11.0;

/// Mean and standard deviation of the range of `n` standard normal draws.
///
/// d2 = ∫ 1 − Φ(x)ⁿ − (1 − Φ(x))ⁿ dx, and with
/// P(R ≤ r) = n ∫ φ(x) [Φ(x + r) − Φ(x)]ⁿ⁻¹ dx,
/// E[R²] = 2 ∫₀^∞ r·(1 − P(R ≤ r)) dr. Both by composite Simpson.
fn range_moments(n: usize) -> (f64, f64) {
    let nx = (2.0 * X_HALF_WIDTH / STEP).round() as usize;
    let nr = (R_MAX / STEP).round() as usize;
    let grid = |i: usize| -X_HALF_WIDTH + i as f64 * STEP;
    let cdf: Vec<f64> = (0..=nx + nr)
        .map(|i| 0.5 * erfc(-grid(i) / std::f64::consts::SQRT_2))
        .collect();
    let pdf: Vec<f64> = (0..=nx)
        .map(|i| (-0.5 * grid(i).powi(2)).exp() / (2.0 * std::f64::consts::PI).sqrt())
        .collect();
    let n_i = n as i32;

    let d2 = simpson(nx, |i| {
        let f = cdf[i];
        1.0 - f.powi(n_i) - (1.0 - f).powi(n_i)
    });

    let second_moment = 2.0
        * simpson(nr, |j| {
            let r = j as f64 * STEP;
            let p_le = n as f64
                * simpson(nx, |i| pdf[i] * (cdf[i + j] - cdf[i]).powi(n_i - 1));
            r * (1.0 - p_le)
        });
    (d2, (second_moment - d2 * d2).sqrt())
}

fn simpson(intervals: usize, f: impl Fn(usize) -> f64) -> f64 {
    debug_assert!(intervals.is_multiple_of(2));
    let mut acc = f(0) + f(intervals);
    for i in 1..intervals {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    acc * STEP / 3.0
}

/// `m` subgroups of equal size `n`, all finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupData {
    subgroups: Vec<Vec<f64>>,
}

impl SubgroupData {
    pub fn new(subgroups: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        let first = subgroups.first().ok_or(StatsError::NoSubgroups)?;
        let n = first.len();
        if !(MIN_SUBGROUP_SIZE..=MAX_SUBGROUP_SIZE).contains(&n) {
            return Err(StatsError::UnsupportedSubgroupSize(n));
        }
        for (index, sg) in subgroups.iter().enumerate() {
            if sg.len() != n {
                return Err(StatsError::SubgroupSizeMismatch {
                    index,
                    expected: n,
                    found: sg.len(),
                });
            }
            if let Some(position) = sg.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFiniteMeasurement {
                    subgroup: index,
                    position,
                });
            }
        }
        Ok(Self { subgroups })
    }

    pub fn subgroups(&self) -> &[Vec<f64>] {
        &self.subgroups
    }

    pub fn subgroup_size(&self) -> usize {
        self.subgroups[0].len()
    }

    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlLimits {
    pub lcl: f64,
    pub cl: f64,
    pub ucl: f64,
}

impl ControlLimits {
    /// Known-parameter limits for subgroup means: μ ± 3σ/√n.
    pub fn known_xbar(mu: f64, sigma: f64, n: usize) -> Self {
        let half = 3.0 * sigma / (n as f64).sqrt();
        Self {
            lcl: mu - half,
            cl: mu,
            ucl: mu + half,
        }
    }

    /// Strictly outside `[lcl, ucl]`.
    pub fn violates(&self, x: f64) -> bool {
        x < self.lcl || x > self.ucl
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlChartResult {
    pub subgroup_size: usize,
    pub subgroups: usize,
    pub constants: ControlConstants,
    pub xbar_points: Vec<f64>,
    pub r_points: Vec<f64>,
    pub grand_mean: f64,
    pub mean_range: f64,
    pub xbar_limits: ControlLimits,
    pub r_limits: ControlLimits,
    pub xbar_violations: Vec<usize>,
    pub r_violations: Vec<usize>,
}

pub fn xbar_r_chart(data: &SubgroupData) -> Result<ControlChartResult, StatsError> {
    let n = data.subgroup_size();
    let constants = control_constants(n)?;
    let xbar_points: Vec<f64> = data.subgroups().iter().map(|sg| shifted_mean(sg)).collect();
    let r_points: Vec<f64> = data
        .subgroups()
        .iter()
        .map(|sg| {
            let (lo, hi) = sg
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .collect();
    let grand_mean = shifted_mean(&xbar_points);
    let mean_range = shifted_mean(&r_points);
    let half_width = constants.a2 * mean_range;
    let xbar_limits = ControlLimits {
        lcl: grand_mean - half_width,
        cl: grand_mean,
        ucl: grand_mean + half_width,
    };
    let r_limits = ControlLimits {
        lcl: constants.d3_factor * mean_range,
        cl: mean_range,
        ucl: constants.d4_factor * mean_range,
    };
    Ok(ControlChartResult {
        subgroup_size: n,
        subgroups: data.len(),
        constants,
        xbar_violations: detect_violations(&xbar_points, &xbar_limits),
        r_violations: detect_violations(&r_points, &r_limits),
        xbar_points,
        r_points,
        grand_mean,
        mean_range,
        xbar_limits,
        r_limits,
    })
}

/// Indices of points strictly outside `[lcl, ucl]`.
pub fn detect_violations(points: &[f64], limits: &ControlLimits) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, &x)| limits.violates(x))
        .map(|(i, _)| i)
        .collect()
}
