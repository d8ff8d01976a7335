//! DPP kernels: the spectral marginal kernel `K`, the L-ensemble kernel, and
//! exact likelihood and marginal evaluation.
//!
//! `P(Y) = det(L_Y) / det(L + I) = |det(K - I_Ybar)|`, where `I_Ybar` is the
//! identity with the diagonal entries of `Y` zeroed. Probability-zero sets
//! evaluate to `f64::NEG_INFINITY` rather than an error.

mod format;

pub use format::{read_kernel, write_kernel, kernel_to_json, KernelDocument};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{
    self, log_abs_det, orthonormality_error, spectral_product, sym_eigendecompose, EigenPair,
    SymmetricMatrix,
};

/// Largest marginal eigenvalue accepted by [`l_from_marginal`].
pub const UNITY_MARGIN: f64 = 1e-12;

/// A set of items, stored 0-based and strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Validates and sorts `items` (0-based) against a ground set of size `n`.
    pub fn new(mut items: Vec<usize>, n: usize) -> Result<Self> {
        items.sort_unstable();
        for w in items.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidInput(format!("duplicate item {}", w[0] + 1)));
            }
        }
        if let Some(&last) = items.last() {
            if last >= n {
                return Err(Error::InvalidInput(format!(
                    "item {} outside ground set of size {n}",
                    last + 1
                )));
            }
        }
        Ok(Subset(items))
    }

    pub fn empty() -> Self {
        Subset(Vec::new())
    }

    /// Subset from a bit mask over items `0..64`.
    pub fn from_mask(mask: u64) -> Self {
        Subset((0..64).filter(|i| mask >> i & 1 == 1).collect())
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    /// 1-based ids, as used in files.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub(crate) fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        Subset(items)
    }

    pub(crate) fn with_item(&self, item: usize) -> Self {
        let mut v = self.0.clone();
        let pos = v.binary_search(&item).unwrap_or_else(|p| p);
        v.insert(pos, item);
        Subset(v)
    }
}

/// Marginal kernel `K = V diag(lambda) V^T` with `0 <= lambda <= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralKernel {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

impl SpectralKernel {
    pub fn new(vectors: DMatrix<f64>, values: DVector<f64>) -> Result<Self> {
        let n = values.len();
        if n == 0 || vectors.nrows() != n || vectors.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "kernel needs an {n}x{n} eigenvector matrix, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {value} at index {index} outside [0, 1]"
                )));
            }
        }
        let err = orthonormality_error(&vectors);
        if !(err <= 1e-8) {
            return Err(Error::InvalidInput(format!(
                "eigenvectors not orthonormal (||V^T V - I||_F = {err:e})"
            )));
        }
        Ok(SpectralKernel { vectors, values })
    }

    /// Diagonal kernel `diag(values)`.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        SpectralKernel::new(DMatrix::identity(n, n), DVector::from_column_slice(values))
    }

    /// Eigendecomposes a dense marginal kernel. Eigenvalues within `1e-10` of
    /// `[0, 1]` are clamped onto it; anything further out is an error.
    pub fn from_dense(k: &SymmetricMatrix) -> Result<Self> {
        let eig = sym_eigendecompose(k)?;
        let mut values = eig.values;
        for (index, v) in values.iter_mut().enumerate() {
            if *v < -1e-10 || *v > 1.0 + 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "eigenvalue {v} at index {index} outside [0, 1]"
                )));
            }
            *v = v.clamp(0.0, 1.0);
        }
        SpectralKernel::new(eig.vectors, values)
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Same eigenvectors, new eigenvalues.
    pub fn with_eigenvalues(&self, values: DVector<f64>) -> Result<Self> {
        SpectralKernel::new(self.vectors.clone(), values)
    }

    /// Dense `K`.
    pub fn dense(&self) -> DMatrix<f64> {
        spectral_product(&self.vectors, self.values.as_slice())
    }

    /// `||offdiag(K)||_F^2 / ||K||_F^2`; zero for a diagonal kernel.
    pub fn off_diagonal_mass(&self) -> f64 {
        let k = self.dense();
        let total = k.norm_squared();
        if total == 0.0 {
            return 0.0;
        }
        let diag: f64 = k.diagonal().iter().map(|v| v * v).sum();
        (total - diag) / total
    }

    pub(crate) fn from_parts_unchecked(vectors: DMatrix<f64>, values: DVector<f64>) -> Self {
        SpectralKernel { vectors, values }
    }
}

/// PSD L-ensemble kernel, stored with its eigendecomposition.
#[derive(Clone, Debug)]
pub struct LKernel {
    matrix: SymmetricMatrix,
    eig: EigenPair,
}

impl LKernel {
    /// Rejects matrices with an eigenvalue below `-1e-8`.
    pub fn new(matrix: SymmetricMatrix) -> Result<Self> {
        let eig = sym_eigendecompose(&matrix)?;
        let min = eig.values[eig.values.len() - 1];
        if min < -1e-8 {
            return Err(Error::NotPsd(min));
        }
        Ok(LKernel { matrix, eig })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        LKernel::new(SymmetricMatrix::from_diagonal(values)?)
    }

    pub fn n(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    /// Eigenvalues (descending, negatives from round-off clamped to zero) and
    /// eigenvectors.
    pub fn spectrum(&self) -> (Vec<f64>, &DMatrix<f64>) {
        (self.eig.values.iter().map(|v| v.max(0.0)).collect(), &self.eig.vectors)
    }

    /// Multiplies the kernel by a positive scalar.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        LKernel::new(SymmetricMatrix::new(self.matrix.matrix() * factor)?)
    }
}

/// `K = L (L + I)^-1`, computed spectrally: each eigenvalue `mu` of `L` maps to
/// `mu / (1 + mu)`.
pub fn marginal_from_l(l: &LKernel) -> SpectralKernel {
    let (mu, vectors) = l.spectrum();
    let values = DVector::from_iterator(mu.len(), mu.iter().map(|m| m / (1.0 + m)));
    SpectralKernel::from_parts_unchecked(vectors.clone(), values)
}

/// Inverse of [`marginal_from_l`]: `lambda -> lambda / (1 - lambda)`.
pub fn l_from_marginal(k: &SpectralKernel) -> Result<LKernel> {
    let mut mu = Vec::with_capacity(k.n());
    for (index, &value) in k.eigenvalues().iter().enumerate() {
        if value >= 1.0 - UNITY_MARGIN {
            return Err(Error::EigenvalueAtUnity { index, value });
        }
        mu.push(value / (1.0 - value));
    }
    let matrix = SymmetricMatrix::new(spectral_product(k.eigenvectors(), &mu))?;
    let eig = EigenPair {
        vectors: k.eigenvectors().clone(),
        values: DVector::from_vec(mu),
    };
    Ok(LKernel { matrix, eig })
}

fn check_subset(n: usize, y: &Subset) -> Result<()> {
    match y.items().last() {
        Some(&last) if last >= n => Err(Error::InvalidInput(format!(
            "item {} outside ground set of size {n}",
            last + 1
        ))),
        _ => Ok(()),
    }
}

/// `K - I_Ybar` for a dense `K`.
pub(crate) fn shifted_for_subset(k: &DMatrix<f64>, y: &Subset) -> DMatrix<f64> {
    let mut m = k.clone();
    for i in 0..m.nrows() {
        if !y.contains(i) {
            m[(i, i)] -= 1.0;
        }
    }
    m
}

/// `log |det(K - I_Ybar)|` for any dense symmetric `K`; `-inf` when singular.
pub fn dense_set_log_likelihood(k: &DMatrix<f64>, y: &Subset) -> f64 {
    log_abs_det(&shifted_for_subset(k, y)).unwrap_or(f64::NEG_INFINITY)
}

/// `log P(Y)` under the marginal kernel, via `log |det(K - I_Ybar)|`.
pub fn set_log_likelihood(k: &SpectralKernel, y: &Subset) -> Result<f64> {
    check_subset(k.n(), y)?;
    Ok(dense_set_log_likelihood(&k.dense(), y))
}

/// Per-example `log P(Y_i)` for a dense `K`. The result order matches
/// `examples` regardless of `parallel`.
pub fn dense_example_log_likelihoods(
    k: &DMatrix<f64>,
    examples: &[Subset],
    parallel: bool,
) -> Vec<f64> {
    if parallel {
        examples.par_iter().map(|y| dense_set_log_likelihood(k, y)).collect()
    } else {
        examples.iter().map(|y| dense_set_log_likelihood(k, y)).collect()
    }
}

/// In-order sum of per-example terms; `-inf` if any term is.
pub(crate) fn ordered_sum(terms: &[f64]) -> f64 {
    terms.iter().fold(0.0, |acc, &t| acc + t)
}

pub fn dense_log_likelihood(k: &DMatrix<f64>, examples: &[Subset], parallel: bool) -> f64 {
    ordered_sum(&dense_example_log_likelihoods(k, examples, parallel))
}

/// `sum_i log |det(K - I_Ybar_i)|`.
pub fn dataset_log_likelihood(k: &SpectralKernel, examples: &[Subset]) -> Result<f64> {
    for y in examples {
        check_subset(k.n(), y)?;
    }
    Ok(dense_log_likelihood(&k.dense(), examples, false))
}

/// `P(A ⊆ Y) = det(K_A)`.
pub fn inclusion_marginal(k: &SpectralKernel, a: &Subset) -> Result<f64> {
    check_subset(k.n(), a)?;
    let dense = k.dense();
    let idx = a.items();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| dense[(idx[r], idx[c])]);
    Ok(if idx.is_empty() { 1.0 } else { sub.determinant() })
}

/// `log det(L + I) = sum_j -log(1 - lambda_j)`.
pub fn normalizer_log(k: &SpectralKernel) -> Result<f64> {
    let mut acc = 0.0;
    for (index, &value) in k.eigenvalues().iter().enumerate() {
        if value >= 1.0 {
            return Err(Error::EigenvalueAtUnity { index, value });
        }
        acc -= (-value).ln_1p();
    }
    Ok(acc)
}

/// Rows `Y` of `V`, each column scaled by `scale[j]`, giving `V_Y S`.
pub(crate) fn scaled_rows(vectors: &DMatrix<f64>, y: &Subset, scale: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(y.len(), vectors.ncols(), |r, c| vectors[(y.items()[r], c)] * scale[c])
}

/// `H = V_Y diag(w) V_Y^T`, the `|Y| x |Y|` Gram matrix of the rows of `V` in
/// `Y` under column weights `w`.
pub(crate) fn weighted_row_gram(vectors: &DMatrix<f64>, y: &Subset, w: &[f64]) -> DMatrix<f64> {
    let k = y.len();
    let mut h = DMatrix::zeros(k, k);
    let rows = y.items();
    for a in 0..k {
        for b in a..k {
            let mut s = 0.0;
            for (c, &wc) in w.iter().enumerate() {
                s += vectors[(rows[a], c)] * wc * vectors[(rows[b], c)];
            }
            h[(a, b)] = s;
            h[(b, a)] = s;
        }
    }
    h
}

/// `log P(Y) = log det(L_Y) - log det(L + I)` evaluated spectrally through the
/// `|Y| x |Y|` matrix `V_Y diag(lambda / (1 - lambda)) V_Y^T`. Requires every
/// eigenvalue strictly below 1. Cost is `O(N |Y|^2)`.
pub fn l_side_set_log_likelihood(k: &SpectralKernel, y: &Subset) -> Result<f64> {
    check_subset(k.n(), y)?;
    let mu = l_eigenvalues(k)?;
    Ok(l_side_term(k.eigenvectors(), &mu, y) + log_one_minus_sum(k))
}

pub(crate) fn l_eigenvalues(k: &SpectralKernel) -> Result<Vec<f64>> {
    k.eigenvalues()
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value >= 1.0 {
                Err(Error::EigenvalueAtUnity { index, value })
            } else {
                Ok(value / (1.0 - value))
            }
        })
        .collect()
}

/// `sum_j log(1 - lambda_j)`.
pub(crate) fn log_one_minus_sum(k: &SpectralKernel) -> f64 {
    k.eigenvalues().iter().map(|&v| (-v).ln_1p()).sum()
}

/// `log det(V_Y diag(mu) V_Y^T)`, `-inf` when singular.
pub(crate) fn l_side_term(vectors: &DMatrix<f64>, mu: &[f64], y: &Subset) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let h = weighted_row_gram(vectors, y, mu);
    numerics::log_abs_det(&h).unwrap_or(f64::NEG_INFINITY)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::rng::RngStream;
    use approx::assert_abs_diff_eq;

    pub(crate) fn random_kernel(n: usize, rng: &mut RngStream) -> SpectralKernel {
        let a = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        let s = SymmetricMatrix::new(&a * a.transpose()).unwrap();
        let v = sym_eigendecompose(&s).unwrap().vectors;
        let vals = DVector::from_fn(n, |_, _| 0.05 + 0.9 * rng.uniform());
        SpectralKernel::new(v, vals).unwrap()
    }

    fn random_psd(n: usize, rng: &mut RngStream) -> LKernel {
        let a = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
        LKernel::new(SymmetricMatrix::new(&a * a.transpose() / n as f64).unwrap()).unwrap()
    }

    fn all_subsets(n: usize) -> impl Iterator<Item = Subset> {
        (0u64..1 << n).map(Subset::from_mask)
    }

    #[test]
    fn subset_validation() {
        assert_eq!(Subset::new(vec![2, 0], 3).unwrap().items(), &[0, 2]);
        assert!(Subset::new(vec![1, 1], 3).is_err());
        assert!(Subset::new(vec![3], 3).is_err());
        assert_eq!(Subset::new(vec![0, 2], 3).unwrap().one_based(), vec![1, 3]);
        assert_eq!(Subset::empty().with_item(4).with_item(1).items(), &[1, 4]);
    }

    #[test]
    fn spectral_kernel_rejects_invalid() {
        assert!(SpectralKernel::diagonal(&[0.5, 1.2]).is_err());
        assert!(SpectralKernel::diagonal(&[-0.1]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(SpectralKernel::new(bad, DVector::from_vec(vec![0.5, 0.5])).is_err());
    }

    #[test]
    fn identity_l_gives_half() {
        for n in 1..5 {
            let k = marginal_from_l(&LKernel::new(SymmetricMatrix::identity(n)).unwrap());
            assert!(k.eigenvalues().iter().all(|&v| v == 0.5));
        }
        let k = marginal_from_l(&LKernel::diagonal(&[0.0, 0.0]).unwrap());
        assert!(k.eigenvalues().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_psd_l_is_rejected() {
        assert!(matches!(LKernel::diagonal(&[1.0, -0.1]), Err(Error::NotPsd(_))));
    }

    #[test]
    fn marginal_matches_direct_solve() {
        let mut rng = RngStream::new(8);
        let l = random_psd(6, &mut rng);
        let k = marginal_from_l(&l);
        let lm = l.matrix().matrix();
        let direct = lm * (lm + DMatrix::<f64>::identity(6, 6)).try_inverse().unwrap();
        assert!((k.dense() - direct).norm() <= 1e-9);
    }

    #[test]
    fn l_from_half_is_identity() {
        let k = SpectralKernel::diagonal(&[0.5, 0.5]).unwrap();
        let l = l_from_marginal(&k).unwrap();
        assert!((l.matrix().matrix() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn l_from_unity_is_error() {
        let k = SpectralKernel::diagonal(&[0.3, 1.0 - 1e-13]).unwrap();
        assert!(matches!(l_from_marginal(&k), Err(Error::EigenvalueAtUnity { index: 1, .. })));
    }

    #[test]
    fn conversion_round_trip() {
        let mut rng = RngStream::new(12);
        for _ in 0..10 {
            let k = random_kernel(7, &mut rng);
            let back = marginal_from_l(&l_from_marginal(&k).unwrap());
            assert!((back.dense() - k.dense()).norm() <= 1e-8);
        }
    }

    #[test]
    fn set_likelihood_small_cases() {
        let k = SpectralKernel::diagonal(&[0.5, 0.5]).unwrap();
        let y = Subset::new(vec![0], 2).unwrap();
        assert_abs_diff_eq!(set_log_likelihood(&k, &y).unwrap(), 0.25f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(
            set_log_likelihood(&k, &Subset::empty()).unwrap(),
            0.25f64.ln(),
            epsilon = 1e-14
        );
        // probability-zero set
        let k = SpectralKernel::diagonal(&[1.0, 0.0]).unwrap();
        assert_eq!(set_log_likelihood(&k, &Subset::empty()).unwrap(), f64::NEG_INFINITY);
        assert!(set_log_likelihood(&k, &Subset::from_mask(0b100)).is_err());
    }

    #[test]
    fn both_likelihood_routes_agree() {
        let mut rng = RngStream::new(77);
        for _ in 0..5 {
            let k = random_kernel(6, &mut rng);
            let l = l_from_marginal(&k).unwrap();
            let lm = l.matrix().matrix();
            let norm = (lm + DMatrix::<f64>::identity(6, 6)).determinant();
            for y in all_subsets(6) {
                let idx = y.items();
                let ly = DMatrix::from_fn(idx.len(), idx.len(), |r, c| lm[(idx[r], idx[c])]);
                let want = if idx.is_empty() { 1.0 } else { ly.determinant() } / norm;
                let got = set_log_likelihood(&k, &y).unwrap().exp();
                assert!((got - want).abs() <= 1e-9);
                let spectral = l_side_set_log_likelihood(&k, &y).unwrap().exp();
                assert!((spectral - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn total_probability_is_one() {
        let mut rng = RngStream::new(5);
        let k = random_kernel(8, &mut rng);
        let total: f64 = all_subsets(8).map(|y| set_log_likelihood(&k, &y).unwrap().exp()).sum();
        assert!((total - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn inclusion_marginals() {
        let mut rng = RngStream::new(41);
        let k = random_kernel(6, &mut rng);
        let dense = k.dense();
        assert_eq!(inclusion_marginal(&k, &Subset::empty()).unwrap(), 1.0);
        for i in 0..6 {
            let a = Subset::new(vec![i], 6).unwrap();
            assert_abs_diff_eq!(inclusion_marginal(&k, &a).unwrap(), dense[(i, i)], epsilon = 1e-14);
        }
        let a = Subset::new(vec![0, 2], 6).unwrap();
        let brute: f64 = all_subsets(6)
            .filter(|y| y.contains(0) && y.contains(2))
            .map(|y| set_log_likelihood(&k, &y).unwrap().exp())
            .sum();
        assert!((inclusion_marginal(&k, &a).unwrap() - brute).abs() <= 1e-9);
        for i in 0..6 {
            let brute: f64 = all_subsets(6)
                .filter(|y| y.contains(i))
                .map(|y| set_log_likelihood(&k, &y).unwrap().exp())
                .sum();
            assert!((brute - dense[(i, i)]).abs() <= 1e-8);
        }
    }

    #[test]
    fn dataset_likelihood_is_additive() {
        let k = SpectralKernel::diagonal(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            dataset_log_likelihood(&k, &[Subset::empty()]).unwrap(),
            0.25f64.ln(),
            epsilon = 1e-14
        );
        let mut rng = RngStream::new(3);
        let k = random_kernel(6, &mut rng);
        let y = Subset::new(vec![1, 4], 6).unwrap();
        let one = set_log_likelihood(&k, &y).unwrap();
        assert_eq!(dataset_log_likelihood(&k, &[y.clone(), y.clone()]).unwrap(), one + one);
        let sets: Vec<Subset> = (0..20).map(|_| Subset::from_mask(rng.next_u64() & 63)).collect();
        let want: f64 = sets.iter().map(|y| set_log_likelihood(&k, y).unwrap()).sum();
        assert!((dataset_log_likelihood(&k, &sets).unwrap() - want).abs() <= 1e-10);
        let par = dense_log_likelihood(&k.dense(), &sets, true);
        assert_eq!(par, dense_log_likelihood(&k.dense(), &sets, false));
    }

    #[test]
    fn normalizer_cases() {
        let k = SpectralKernel::diagonal(&[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(normalizer_log(&k).unwrap(), 4f64.ln(), epsilon = 1e-14);
        assert_eq!(normalizer_log(&SpectralKernel::diagonal(&[0.0; 3]).unwrap()).unwrap(), 0.0);
        assert!(normalizer_log(&SpectralKernel::diagonal(&[1.0]).unwrap()).is_err());
        let mut rng = RngStream::new(19);
        let k = random_kernel(8, &mut rng);
        let lm = l_from_marginal(&k).unwrap().matrix().matrix().clone();
        let total: f64 = all_subsets(8)
            .map(|y| {
                let idx = y.items();
                if idx.is_empty() {
                    1.0
                } else {
                    DMatrix::from_fn(idx.len(), idx.len(), |r, c| lm[(idx[r], idx[c])]).determinant()
                }
            })
            .sum();
        assert!((normalizer_log(&k).unwrap() - total.ln()).abs() <= 1e-8);
    }

    #[test]
    fn off_diagonal_mass_of_diagonal_kernel_is_zero() {
        assert_eq!(SpectralKernel::diagonal(&[0.2, 0.7]).unwrap().off_diagonal_mass(), 0.0);
        let mut rng = RngStream::new(1);
        assert!(random_kernel(5, &mut rng).off_diagonal_mass() > 0.0);
    }
}
