//! Empirical item/pair frequencies, the two kernel initializers and the
//! diversity statistic.

use nalgebra::{DMatrix, DVector};

use super::SubsetDataset;
use crate::error::{Error, Result};
use crate::kernel::{marginal_from_l, LKernel, SpectralKernel};
use crate::learning::project_to_valid;
use crate::numerics::SymmetricMatrix;
use crate::rng::RngStream;

/// Normalized single and pair frequencies. `pairs` has `singles` on its
/// diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    pub singles: DVector<f64>,
    pub pairs: DMatrix<f64>,
}

impl MomentTable {
    pub fn n(&self) -> usize {
        self.singles.len()
    }
}

pub fn empirical_moments(data: &SubsetDataset) -> Result<MomentTable> {
    let n = data.ground_size();
    if data.is_empty() {
        return Err(Error::InvalidInput("moments need at least one example".into()));
    }
    let mut counts = DMatrix::<u64>::zeros(n, n);
    for y in data.examples() {
        let items = y.items();
        for (a, &i) in items.iter().enumerate() {
            for &j in &items[a..] {
                counts[(i, j)] += 1;
            }
        }
    }
    let total = data.len() as f64;
    let pairs = DMatrix::from_fn(n, n, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        counts[(lo, hi)] as f64 / total
    });
    Ok(MomentTable { singles: pairs.diagonal(), pairs })
}

/// Moment-matched matrix before projection: diagonal `m_i`, off-diagonal
/// `sqrt(max(m_i m_j - m_ij, 0))`.
pub fn moments_matrix(t: &MomentTable) -> SymmetricMatrix {
    let m = &t.singles;
    SymmetricMatrix::from_upper_fn(t.n(), |i, j| {
        if i == j {
            m[i]
        } else {
            (m[i] * m[j] - t.pairs[(i, j)]).max(0.0).sqrt()
        }
    })
    .expect("moment table is non-empty")
}

/// Moment-matching initializer: [`moments_matrix`] projected onto valid
/// marginal kernels.
pub fn moments_init(t: &MomentTable) -> Result<SpectralKernel> {
    project_to_valid(&moments_matrix(t))
}

/// `A A^T / n` with `A` an `n x n` matrix of standard normals, filled row by
/// row.
pub fn wishart_l(n: usize, rng: &mut RngStream) -> Result<LKernel> {
    if n == 0 {
        return Err(Error::InvalidInput("ground set must have at least one item".into()));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = rng.standard_normal();
        }
    }
    LKernel::new(SymmetricMatrix::new(&a * a.transpose() / n as f64)?)
}

/// Wishart initializer: `K = L (L + I)^-1` for `L` from [`wishart_l`].
pub fn wishart_init(n: usize, rng: &mut RngStream) -> Result<SpectralKernel> {
    Ok(marginal_from_l(&wishart_l(n, rng)?))
}

/// `d = ||M||_F / (N ||diag(M)||_2)` over the moment matrix.
pub fn diversity_stat(t: &MomentTable) -> Result<f64> {
    let diag = t.singles.norm();
    if diag == 0.0 {
        return Err(Error::InvalidInput("diversity statistic needs a non-zero diagonal".into()));
    }
    Ok(t.pairs.norm() / (t.n() as f64 * diag))
}
