//! Dense symmetric linear algebra and elementary symmetric polynomials.
//!
//! Everything here is a pure function of its inputs. Eigenvalues are always
//! reported in descending order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// A square matrix whose storage is exactly symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps `m`, replacing it by `(m + m^T) / 2` so that `m[(i, j)] == m[(j, i)]`
    /// holds bit-for-bit.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        Ok(SymmetricMatrix(s))
    }

    /// Builds a matrix from the upper triangle produced by `f(i, j)` with `i <= j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(SymmetricMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        SymmetricMatrix::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

impl std::ops::Index<(usize, usize)> for SymmetricMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Orthonormal eigenvectors (as columns) with eigenvalues sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenPair {
    /// `V diag(values) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        spectral_product(&self.vectors, self.values.as_slice())
    }
}

/// `V diag(d) V^T`, symmetrized.
pub fn spectral_product(vectors: &DMatrix<f64>, diag: &[f64]) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= diag[j];
    }
    let mut out = &scaled * vectors.transpose();
    let n = out.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

pub fn sym_eigendecompose(s: &SymmetricMatrix) -> Result<EigenPair> {
    if s.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(s.matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::InvalidInput("symmetric eigensolver did not converge".into()))?;
    let n = s.dim();
    let mut order: Vec<usize> = (0..n).collect();
    // descending; stable so equal eigenvalues keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenPair { vectors, values })
}

/// `||A^T A - I||_F` for a matrix with (intended) orthonormal columns.
pub fn orthonormality_error(v: &DMatrix<f64>) -> f64 {
    let g = v.transpose() * v;
    (g - DMatrix::<f64>::identity(v.ncols(), v.ncols())).norm()
}

/// Modified Gram-Schmidt on the columns of `v`, in column order.
///
/// Each output column has positive inner product with its input column, so
/// signs are preserved for a nearly-orthonormal input.
pub fn reorthonormalize(v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = v.clone();
    for j in 0..q.ncols() {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        q.column_mut(j).unscale_mut(norm);
    }
    q
}

/// Matrix exponential of a skew-symmetric matrix by scaling and squaring.
///
/// The argument is scaled by `2^-s` until its Frobenius norm is at most 0.5,
/// the Taylor series is summed until the relative term size drops below
/// 1e-16, and the result is squared `s` times.
pub fn skew_matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::InvalidInput("matrix exponential needs a square matrix".into()));
    }
    let asym = (a + a.transpose()).norm();
    if !(asym <= 1e-10) {
        return Err(Error::NotSkew(asym));
    }
    let n = a.nrows();
    // exact skew part
    let a = (a - a.transpose()) * 0.5;
    let norm = a.norm();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = &a * scale;
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=60 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.norm() < 1e-16 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// `e_k` of `values`: the sum over all `k`-subsets of the products of their
/// members. `e_0 = 1`, and `e_k = 0` for `k > values.len()`.
pub fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    if k > values.len() {
        return 0.0;
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for (m, &v) in values.iter().enumerate() {
        let top = k.min(m + 1);
        for l in (1..=top).rev() {
            e[l] += v * e[l - 1];
        }
    }
    e[k]
}

/// Prefix table of elementary symmetric polynomials.
///
/// `table[l][m]` is `e_l` over the first `m` values, for `l in 0..=k` and
/// `m in 0..=values.len()`.
#[derive(Clone, Debug)]
pub struct EspTable {
    rows: Vec<Vec<f64>>,
}

impl EspTable {
    pub fn new(values: &[f64], k: usize) -> Self {
        let n = values.len();
        let mut rows = vec![vec![0.0; n + 1]; k + 1];
        rows[0].iter_mut().for_each(|v| *v = 1.0);
        for l in 1..=k {
            for m in 1..=n {
                rows[l][m] = rows[l][m - 1] + values[m - 1] * rows[l - 1][m - 1];
            }
        }
        EspTable { rows }
    }

    /// `e_l` over the first `m` values.
    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.rows.get(l).map_or(0.0, |r| r[m])
    }

    pub fn order(&self) -> usize {
        self.rows.len() - 1
    }
}

/// LU factorization with partial pivoting, keeping the pivots around for
/// determinant and inverse computations.
pub(crate) struct Lu {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    log_abs_det: Option<f64>,
}

impl Lu {
    pub(crate) fn new(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let lu = m.lu();
        let threshold = 1e-300 * n.max(1) as f64;
        let mut log_abs = 0.0;
        let mut singular = false;
        {
            let u = lu.u();
            for i in 0..n {
                let p = u[(i, i)].abs();
                if !(p >= threshold) {
                    singular = true;
                    break;
                }
                log_abs += p.ln();
            }
        }
        Lu {
            lu,
            log_abs_det: if singular { None } else { Some(log_abs) },
        }
    }

    pub(crate) fn log_abs_det(&self) -> Option<f64> {
        self.log_abs_det
    }

    pub(crate) fn inverse(&self) -> Option<DMatrix<f64>> {
        self.log_abs_det?;
        self.lu.try_inverse()
    }
}

/// `log |det(S)|`, or `None` when the matrix is singular (some pivot below
/// `1e-300 * n`). An empty matrix has determinant 1.
pub fn log_abs_det(s: &DMatrix<f64>) -> Option<f64> {
    if s.nrows() == 0 {
        return Some(0.0);
    }
    Lu::new(s.clone()).log_abs_det()
}
