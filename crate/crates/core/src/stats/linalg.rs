use std::cmp::Ordering;
use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use super::StatsError;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest |a_ij − a_ji|, with its position. `None` for non-square input.
    fn asymmetry(&self) -> Option<(usize, usize, f64)> {
        if self.rows != self.cols {
            return None;
        }
        let mut worst = (0, 0, 0.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let d = (self[(i, j)] - self[(j, i)]).abs();
                if d > worst.2 {
                    worst = (i, j, d);
                }
            }
        }
        Some(worst)
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                if i != j {
                    acc += self[(i, j)].powi(2);
                }
            }
        }
        acc.sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries((0..self.rows).map(|r| self.row(r)))
            .finish()
    }
}

/// Serialized as an array of rows.
impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.rows))?;
        for r in 0..self.rows {
            seq.serialize_element(self.row(r))?;
        }
        seq.end()
    }
}

/// Eigenpairs of a symmetric matrix: `vectors` holds one unit eigenvector per
/// column, matching `values` in order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const CONVERGENCE_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// Eigenvalues closer than this (relative to ‖M‖_F) are treated as tied.
const TIE_TOLERANCE: f64 = 1e-10;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
/// drops to `1e-12·‖M‖_F` (at most 100 sweeps). Eigenvalues come out sorted
/// non-increasing; each eigenvector is signed so that its largest-magnitude
/// entry is positive (lowest index wins a tie). Within a block of tied
/// eigenvalues the basis is arbitrary; such vectors are ordered by their
/// first differing entry, largest first.
pub fn eigen_sym(m: &Matrix) -> Result<SymEigen, StatsError> {
    let (i, j, diff) = m.asymmetry().ok_or(StatsError::NotSquare {
        rows: m.rows(),
        cols: m.cols(),
    })?;
    if diff > SYMMETRY_TOLERANCE * m.max_abs().max(1.0) {
        return Err(StatsError::NotSymmetric { i, j, diff });
    }
    let n = m.rows();
    let norm = m.frobenius_norm();

    // Work on the exactly symmetrized copy.
    let mut a = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = Matrix::identity(n);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if a.off_diagonal_norm() <= CONVERGENCE_TOLERANCE * norm {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged && a.off_diagonal_norm() > CONVERGENCE_TOLERANCE * norm {
        return Err(StatsError::NoConvergence(MAX_SWEEPS));
    }

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut vec = v.column(k);
            fix_sign(&mut vec);
            (a[(k, k)], vec)
        })
        .collect();
    sort_pairs(&mut pairs, TIE_TOLERANCE * norm);

    let mut vectors = Matrix::zeros(n, n);
    for (k, (_, vec)) in pairs.iter().enumerate() {
        for (r, x) in vec.iter().enumerate() {
            vectors[(r, k)] = *x;
        }
    }
    Ok(SymEigen {
        values: pairs.into_iter().map(|(l, _)| l).collect(),
        vectors,
    })
}

/// One Jacobi rotation zeroing a[p][q]; accumulates the rotation into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let n = a.rows();
    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    a[(p, p)] -= t * apq;
    a[(q, q)] += t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        if k != p && k != q {
            let akp = a[(k, p)];
            let akq = a[(k, q)];
            let new_kp = c * akp - s * akq;
            let new_kq = s * akp + c * akq;
            a[(k, p)] = new_kp;
            a[(p, k)] = new_kp;
            a[(k, q)] = new_kq;
            a[(q, k)] = new_kq;
        }
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Makes the largest-magnitude entry positive. Entries within a relative
/// 1e-9 of the maximum count as tied, and the lowest index among them decides.
pub(crate) fn fix_sign(vec: &mut [f64]) {
    let max = vec.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = vec
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .expect("max is attained");
    if vec[pivot] < 0.0 {
        vec.iter_mut().for_each(|x| *x = -*x);
    }
}

fn sort_pairs(pairs: &mut [(f64, Vec<f64>)], tie: f64) {
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end - 1].0 - pairs[end].0 <= tie {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|a, b| lexicographic_desc(&a.1, &b.1));
        }
        start = end;
    }
}

fn lexicographic_desc(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| y.total_cmp(x))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}
