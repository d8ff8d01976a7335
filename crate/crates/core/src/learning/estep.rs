//! E-step of EM: the posterior over eigenvector index sets `J` given an
//! observed set `Y` is a k-DPP with kernel `Q^Y = R V_Y^T V_Y R`, where
//! `R = diag(sqrt(lambda / (1 - lambda)))`. Everything is computed through
//! the `|Y| x |Y|` matrix `H = V_Y R^2 V_Y^T`, which shares the nonzero
//! spectrum of `Q^Y`.

use nalgebra::{DMatrix, DVector};

use super::{clamp_eigenvalues, ordered_accumulate, TrainConfig};
use crate::error::{Error, Result};
use crate::kernel::{scaled_rows, weighted_row_gram, SpectralKernel, Subset};
use crate::numerics::{sym_eigendecompose, EigenPair, SymmetricMatrix};

/// Factors of the E-step posterior for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct EStepFactors {
    pub example: usize,
    /// Diagonal of `R`.
    pub r: DVector<f64>,
    /// Rows of `V` indexed by `Y` (`|Y| x N`).
    pub v_y: DMatrix<f64>,
    /// `V_Y R^2 V_Y^T`.
    pub h: DMatrix<f64>,
    /// Eigenpairs of `H`, eigenvalues descending.
    pub h_eig: EigenPair,
    /// `R V_Y^T Ṽ diag(1 / sqrt(λ̃))` (`N x |Y|`): orthonormal eigenvectors
    /// of `Q^Y` for its nonzero eigenvalues, each with a positive
    /// largest-magnitude entry.
    pub lifted: DMatrix<f64>,
}

impl EStepFactors {
    /// Dense `Q^Y` (`N x N`).
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let rz = DMatrix::from_fn(self.r.len(), self.v_y.nrows(), |j, a| self.r[j] * self.v_y[(a, j)]);
        &rz * rz.transpose()
    }
}

pub(crate) fn check_clamped(k: &SpectralKernel, eps: f64) -> Result<()> {
    for (index, &value) in k.eigenvalues().iter().enumerate() {
        if !(value >= eps && value <= 1.0 - eps) {
            return Err(Error::EigenvalueOutsideClamp { index, value });
        }
    }
    Ok(())
}

fn r_diagonal(values: &DVector<f64>) -> Vec<f64> {
    values.iter().map(|&v| (v / (1.0 - v)).sqrt()).collect()
}

/// E-step factors of example `example` with observed set `y` (non-empty).
/// The eigenvalues of `k` must lie in `[clamp_eps, 1 - clamp_eps]`.
pub fn estep_factors(k: &SpectralKernel, example: usize, y: &Subset, clamp_eps: f64) -> Result<EStepFactors> {
    check_clamped(k, clamp_eps)?;
    if y.is_empty() {
        return Err(Error::InvalidInput("E-step factors need a non-empty set".into()));
    }
    if y.items().last().is_some_and(|&i| i >= k.n()) {
        return Err(Error::InvalidInput(format!("example {example} is outside the ground set")));
    }
    factors_with(k.eigenvectors(), &r_diagonal(k.eigenvalues()), example, y)
}

fn factors_with(vectors: &DMatrix<f64>, r: &[f64], example: usize, y: &Subset) -> Result<EStepFactors> {
    let n = vectors.nrows();
    let ones = vec![1.0; n];
    let r2: Vec<f64> = r.iter().map(|x| x * x).collect();
    let v_y = scaled_rows(vectors, y, &ones);
    let h = weighted_row_gram(vectors, y, &r2);
    let h_eig = sym_eigendecompose(&SymmetricMatrix::new(h.clone())?)?;
    if !h_eig.values.iter().all(|&v| v > 0.0) {
        return Err(Error::DegenerateExample(example));
    }
    let mut lifted = scaled_rows(vectors, y, r).transpose() * &h_eig.vectors;
    for (c, mut col) in lifted.column_iter_mut().enumerate() {
        let peak = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        let s = h_eig.values[c].sqrt();
        col /= if peak < 0.0 { -s } else { s };
    }
    Ok(EStepFactors { example, r: DVector::from_column_slice(r), v_y, h, h_eig, lifted })
}

/// `q(j in J | Y) = sum_r V̂_r(j)^2`.
pub fn estep_item_marginals(f: &EStepFactors) -> DVector<f64> {
    DVector::from_fn(f.lifted.nrows(), |j, _| f.lifted.row(j).norm_squared())
}

/// `(1/n) sum_i q(j in J | Y_i)` before clamping. Empty examples contribute
/// nothing.
pub fn expected_inclusion(k: &SpectralKernel, examples: &[Subset], cfg: &TrainConfig) -> Result<DVector<f64>> {
    check_clamped(k, cfg.clamp_eps)?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("eigenvalue update needs at least one example".into()));
    }
    let n = k.n();
    let r = r_diagonal(k.eigenvalues());
    let total = ordered_accumulate(
        examples.len(),
        cfg.parallel_examples,
        || DVector::zeros(n),
        |acc, i| {
            let y = &examples[i];
            if !y.is_empty() {
                *acc += estep_item_marginals(&factors_with(k.eigenvectors(), &r, i, y)?);
            }
            Ok(())
        },
    )?;
    Ok(total / examples.len() as f64)
}

/// M-step for the eigenvalues: [`expected_inclusion`] clamped into
/// `[clamp_eps, 1 - clamp_eps]`.
pub fn eigenvalue_update(k: &SpectralKernel, examples: &[Subset], cfg: &TrainConfig) -> Result<DVector<f64>> {
    Ok(clamp_eigenvalues(&expected_inclusion(k, examples, cfg)?, cfg.clamp_eps))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kernel::tests::random_kernel;
    use crate::rng::RngStream;

    /// All `size`-subsets of `0..n` in lexicographic order.
    pub(crate) fn k_subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
        (0u64..1 << n)
            .filter(|m| m.count_ones() as usize == size)
            .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
            .collect()
    }

    fn minor(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
    }

    /// `p_K(J) p_K(Y | J)` for every `J` with `|J| = |Y|`, from the mixture
    /// of elementary DPPs.
    pub(crate) fn joint_weights(k: &SpectralKernel, y: &Subset) -> Vec<(Vec<usize>, f64)> {
        let n = k.n();
        let lam = k.eigenvalues();
        k_subsets(n, y.len())
            .into_iter()
            .map(|j| {
                let pj: f64 = (0..n).map(|c| if j.contains(&c) { lam[c] } else { 1.0 - lam[c] }).product();
                let d = minor(k.eigenvectors(), y.items(), &j).determinant();
                (j, pj * d * d)
            })
            .collect()
    }

    fn posterior(k: &SpectralKernel, y: &Subset) -> Vec<(Vec<usize>, f64)> {
        let w = joint_weights(k, y);
        let z: f64 = w.iter().map(|(_, p)| p).sum();
        w.into_iter().map(|(j, p)| (j, p / z)).collect()
    }

    fn random_set(n: usize, size: usize, rng: &mut RngStream) -> Subset {
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        Subset::new(perm[..size].to_vec(), n).unwrap()
    }

    #[test]
    fn scalar_case() {
        let k = SpectralKernel::diagonal(&[0.5]).unwrap();
        let f = estep_factors(&k, 0, &Subset::from_mask(1), 1e-5).unwrap();
        assert_eq!(f.r[0], 1.0);
        assert_eq!(f.h[(0, 0)], 1.0);
        assert!((f.lifted.column(0).norm() - 1.0).abs() < 1e-15);
        assert!((estep_item_marginals(&f)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn half_eigenvalues_give_identity_r() {
        let mut rng = RngStream::new(3);
        let k = random_kernel(5, &mut rng);
        let k = k.with_eigenvalues(DVector::from_element(5, 0.5)).unwrap();
        let y = Subset::new(vec![1, 3], 5).unwrap();
        let f = estep_factors(&k, 0, &y, 1e-5).unwrap();
        assert!(f.r.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        let z = f.v_y.transpose() * &f.v_y;
        assert!((f.q_matrix() - z).norm() < 1e-14);
    }

    #[test]
    fn factors_match_q_spectrum() {
        let mut rng = RngStream::new(4);
        let k = random_kernel(8, &mut rng);
        for size in 1..=4 {
            let y = random_set(8, size, &mut rng);
            let f = estep_factors(&k, 0, &y, 1e-5).unwrap();
            let q = f.q_matrix();
            let qs = sym_eigendecompose(&SymmetricMatrix::new(q.clone()).unwrap()).unwrap();
            for a in 0..size {
                assert!((qs.values[a] - f.h_eig.values[a]).abs() < 1e-8);
            }
            assert!(qs.values.iter().skip(size).all(|v| v.abs() < 1e-8));
            let gram = f.lifted.transpose() * &f.lifted;
            assert!((gram - DMatrix::<f64>::identity(size, size)).norm() < 1e-6);
            let qv = &q * &f.lifted;
            let vl = &f.lifted * DMatrix::from_diagonal(&f.h_eig.values);
            assert!((qv - vl).norm() < 1e-8);
        }
    }

    #[test]
    fn posterior_by_enumeration() {
        let mut rng = RngStream::new(5);
        for _ in 0..3 {
            let k = random_kernel(8, &mut rng);
            for size in 1..=3 {
                let y = random_set(8, size, &mut rng);
                let f = estep_factors(&k, 0, &y, 1e-5).unwrap();
                let q = f.q_matrix();
                let e_k: f64 = f.h_eig.values.iter().product();
                let w = joint_weights(&k, &y);
                let z: f64 = w.iter().map(|(_, p)| p).sum();
                let ratio0 = minor(&q, &w[0].0, &w[0].0).determinant() / w[0].1;
                for (j, p) in &w {
                    let dq = minor(&q, j, j).determinant();
                    assert!((dq / e_k - p / z).abs() < 1e-8);
                    if *p > 1e-12 {
                        assert!((dq / p / ratio0 - 1.0).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_by_enumeration() {
        let mut rng = RngStream::new(6);
        let k = random_kernel(8, &mut rng);
        let y = random_set(8, 3, &mut rng);
        let m = estep_item_marginals(&estep_factors(&k, 0, &y, 1e-5).unwrap());
        let post = posterior(&k, &y);
        for j in 0..8 {
            let want: f64 = post.iter().filter(|(s, _)| s.contains(&j)).map(|(_, p)| p).sum();
            assert!((m[j] - want).abs() < 1e-9);
        }
        assert!((m.sum() - 3.0).abs() < 1e-8);
        assert!(m.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn full_set_marginals_are_one() {
        let mut rng = RngStream::new(7);
        let k = random_kernel(5, &mut rng);
        let m = estep_item_marginals(&estep_factors(&k, 0, &Subset::from_mask(31), 1e-5).unwrap());
        assert!(m.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn outside_clamp_is_an_error() {
        let k = SpectralKernel::diagonal(&[0.5, 0.0]).unwrap();
        let r = estep_factors(&k, 0, &Subset::from_mask(1), 1e-5);
        assert!(matches!(r, Err(Error::EigenvalueOutsideClamp { index: 1, .. })));
    }

    #[test]
    fn eigenvalue_update_trivial_cases() {
        let cfg = TrainConfig::default();
        let k = SpectralKernel::diagonal(&[0.5]).unwrap();
        let lam = eigenvalue_update(&k, &[Subset::from_mask(1)], &cfg).unwrap();
        assert_eq!(lam[0], 1.0 - cfg.clamp_eps);
        let k = SpectralKernel::diagonal(&[0.3, 0.6]).unwrap();
        let lam = eigenvalue_update(&k, &[Subset::empty(), Subset::empty()], &cfg).unwrap();
        assert!(lam.iter().all(|&v| v == cfg.clamp_eps));
    }

    #[test]
    fn eigenvalue_update_by_enumeration() {
        let cfg = TrainConfig::default();
        let mut rng = RngStream::new(8);
        let k = random_kernel(8, &mut rng);
        let ex: Vec<Subset> = (0..5).map(|i| random_set(8, 1 + i % 4, &mut rng)).collect();
        let got = expected_inclusion(&k, &ex, &cfg).unwrap();
        let mut want = DVector::zeros(8);
        for y in &ex {
            for (j, p) in posterior(&k, y) {
                for c in j {
                    want[c] += p;
                }
            }
        }
        want /= ex.len() as f64;
        assert!((got.clone() - want).amax() < 1e-9);
        let mean_size = ex.iter().map(Subset::len).sum::<usize>() as f64 / 5.0;
        assert!((got.sum() - mean_size).abs() < 1e-8);
        let serial = expected_inclusion(&k, &ex, &TrainConfig { parallel_examples: false, ..cfg }).unwrap();
        assert_eq!(got, serial);
    }
}
