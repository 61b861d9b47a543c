use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::PcaError;
use crate::num::Scalar;

pub const DEFAULT_JACOBI_TOLERANCE: f64 = 1e-12;
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Matrix<T> {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            n_rows: rows.len(),
            n_cols,
            data,
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n_cols, self.n_rows);
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows, "shape mismatch");
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                for j in 0..other.n_cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.n_rows).map(|i| self[(i, j)]).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.n_rows.min(self.n_cols)).fold(T::zero(), |acc, i| acc + self[(i, i)])
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n_cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Sample covariance (n - 1 denominator) of the columns of `rows`.
pub fn covariance_matrix<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Result<Matrix<T>, PcaError> {
    if rows.len() < 2 {
        return Err(PcaError::TooFewRows(rows.len()));
    }
    let x = Matrix::from_rows(rows);
    let (n, d) = (x.n_rows, x.n_cols);
    let nt = T::from_count(n);
    let means: Vec<T> = (0..d)
        .map(|j| (0..n).fold(T::zero(), |acc, i| acc + x[(i, j)]) / nt)
        .collect();
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let s = (0..n).fold(T::zero(), |acc, i| {
                acc + (x[(i, a)] - means[a]) * (x[(i, b)] - means[b])
            });
            let v = s / (nt - T::one());
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EigenDecomposition<T> {
    pub eigenvalues: Vec<T>,
    /// Column `j` is the unit eigenvector for `eigenvalues[j]`, with its first
    /// nonzero entry positive.
    pub eigenvectors: Matrix<T>,
    pub sweeps: usize,
    pub rotations: usize,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// V diag(lambda) V^T.
    pub fn reconstruct(&self) -> Matrix<T> {
        let v = &self.eigenvectors;
        v.matmul(&Matrix::from_diagonal(&self.eigenvalues))
            .matmul(&v.transpose())
    }
}

fn max_off_diagonal<T: Scalar>(a: &Matrix<T>) -> T {
    let mut m = T::zero();
    for p in 0..a.n_rows {
        for q in p + 1..a.n_cols {
            m = m.max(a[(p, q)].abs());
        }
    }
    m
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps every upper off-diagonal pair with a plane rotation until the
/// largest off-diagonal magnitude drops below `tol`. Off-diagonal entries that
/// are negligible next to both diagonal entries are zeroed outright, which
/// lets the iteration reach `tol` even for large-magnitude inputs.
pub fn jacobi_eigen<T: Scalar>(a: &Matrix<T>, tol: T) -> Result<EigenDecomposition<T>, PcaError> {
    if !a.is_square() {
        return Err(PcaError::NotSquare(a.n_rows, a.n_cols));
    }
    let n = a.n_rows;
    let scale = a.data.iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let sym_tol = T::lit(1e-12) * scale;
    for p in 0..n {
        for q in p + 1..n {
            if (a[(p, q)] - a[(q, p)]).abs() > sym_tol {
                return Err(PcaError::NotSymmetric { row: p, col: q });
            }
        }
    }

    let mut w = a.clone();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    let mut rotations = 0;
    let hundred = T::lit(100.0);
    let two = T::lit(2.0);
    loop {
        if max_off_diagonal(&w) < tol || n < 2 {
            break;
        }
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(PcaError::NoConvergence {
                sweeps,
                off_diagonal: max_off_diagonal(&w).as_f64(),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = w[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let (app, aqq) = (w[(p, p)], w[(q, q)]);
                let g = hundred * apq.abs();
                if app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    w[(p, q)] = T::zero();
                    w[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (two * apq);
                let t = if (theta * theta).is_infinite() {
                    T::lit(0.5) / theta
                } else {
                    let t = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                w[(p, p)] = app - t * apq;
                w[(q, q)] = aqq + t * apq;
                w[(p, q)] = T::zero();
                w[(q, p)] = T::zero();
                for k in 0..n {
                    if k != p && k != q {
                        let (akp, akq) = (w[(k, p)], w[(k, q)]);
                        let new_kp = c * akp - s * akq;
                        let new_kq = s * akp + c * akq;
                        w[(k, p)] = new_kp;
                        w[(p, k)] = new_kp;
                        w[(k, q)] = new_kq;
                        w[(q, k)] = new_kq;
                    }
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
                rotations += 1;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w[(j, j)]
            .partial_cmp(&w[(i, i)])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let eigenvalues = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    let negligible = T::lit(1e-10);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let flip = col
            .iter()
            .find(|x| x.abs() > negligible)
            .is_some_and(|&x| x < T::zero());
        for (k, &x) in col.iter().enumerate() {
            vectors[(k, dst)] = if flip { -x } else { x };
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vectors,
        sweeps,
        rotations,
    })
}
