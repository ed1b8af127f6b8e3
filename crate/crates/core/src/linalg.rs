//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in symmetric eigenproblem".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Solver for a symmetric positive (semi)definite system.
///
/// Cholesky is tried first; when it breaks down the system is solved through
/// the eigendecomposition, inverting only eigenvalues above a relative
/// threshold.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpdSolver {
    Cholesky {
        #[serde(with = "dense")]
        lower: DMatrix<f64>,
    },
    Eigen {
        #[serde(with = "dense")]
        vectors: DMatrix<f64>,
        inverse_values: Vec<f64>,
    },
}

impl SpdSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(SpdSolver::Cholesky { lower: chol.unpack() });
        }
        let (values, vectors) = sym_eigen(a)?;
        let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if top == 0.0 {
            return Err(Error::Numeric("system matrix is zero".into()));
        }
        let tol = top * f64::EPSILON * a.nrows() as f64;
        let inverse_values = values
            .iter()
            .map(|&s| if s > tol { 1.0 / s } else { 0.0 })
            .collect();
        Ok(SpdSolver::Eigen { vectors, inverse_values })
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdSolver::Cholesky { lower } => lower.nrows(),
            SpdSolver::Eigen { vectors, .. } => vectors.nrows(),
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            SpdSolver::Cholesky { lower } => {
                let y = lower
                    .solve_lower_triangular(b)
                    .ok_or_else(|| Error::Numeric("singular triangular factor".into()))?;
                lower
                    .tr_solve_lower_triangular(&y)
                    .ok_or_else(|| Error::Numeric("singular triangular factor".into()))
            }
            SpdSolver::Eigen { vectors, inverse_values } => {
                let mut coef = vectors.tr_mul(b);
                for (mut row, &inv) in coef.row_iter_mut().zip(inverse_values) {
                    row *= inv;
                }
                Ok(vectors * coef)
            }
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let m = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        Ok(self.solve(&m)?.column(0).into_owned())
    }
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix through its spectrum.
pub fn pinv_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen(a)?;
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = top * f64::EPSILON * a.nrows().max(1) as f64;
    let mut scaled = vectors.clone();
    for (j, &s) in values.iter().enumerate() {
        let inv = if s.abs() > tol { 1.0 / s } else { 0.0 };
        scaled.column_mut(j).scale_mut(inv);
    }
    Ok(scaled * vectors.transpose())
}

/// Operator (spectral) norm by power iteration on `VᵀV`.
///
/// Stops when the Rayleigh quotient changes by less than `rel_tol` relative.
/// The returned value is never below the largest row norm of `v`, which is a
/// lower bound of the operator norm.
pub fn operator_norm(v: &DMatrix<f64>, rel_tol: f64) -> f64 {
    let (rows, cols) = v.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let row_max = v
        .row_iter()
        .map(|r| r.norm())
        .fold(0.0_f64, f64::max);
    if row_max == 0.0 {
        return 0.0;
    }
    let gram = v.tr_mul(v);
    // Start from the column-sum direction perturbed by index so it is not
    // orthogonal to the top singular vector in symmetric cases.
    let mut x = DVector::from_fn(cols, |j, _| 1.0 + (j as f64 + 1.0).sqrt() * 1e-3);
    x /= x.norm();
    let mut estimate = 0.0_f64;
    for _ in 0..10_000 {
        let y = &gram * &x;
        let rayleigh = x.dot(&y);
        let norm = y.norm();
        if norm == 0.0 {
            break;
        }
        x = y / norm;
        if (rayleigh - estimate).abs() <= rel_tol * rayleigh.abs() {
            estimate = rayleigh;
            break;
        }
        estimate = rayleigh;
    }
    estimate.max(0.0).sqrt().max(row_max)
}

/// Serde adapter storing a dense matrix as `{rows, cols, data}` in row-major order.
pub mod dense {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let data = m.transpose().as_slice().to_vec();
        Dense { rows: m.nrows(), cols: m.ncols(), data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.data.len() != dense.rows * dense.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                dense.data.len(),
                dense.rows,
                dense.cols
            )));
        }
        Ok(DMatrix::from_row_slice(dense.rows, dense.cols, &dense.data))
    }
}
