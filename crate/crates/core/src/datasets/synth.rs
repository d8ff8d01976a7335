//! Synthetic ground-truth kernels and datasets sampled from them.

use nalgebra::{DMatrix, DVector};

use super::SubsetDataset;
use crate::error::{Error, Result};
use crate::inference::{sample_chunked, sample_dpp};
use crate::kernel::{marginal_from_l, LKernel, SpectralKernel};
use crate::numerics::{reorthonormalize, SymmetricMatrix};
use crate::rng::RngStream;

/// Attempts per chunk after which an acceptance rate below 0.1% is an error.
const REJECTION_WINDOW: usize = 10_000;

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with the signs
/// of `R`'s diagonal folded into `Q`).
pub fn random_orthogonal(n: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    reorthonormalize(&q)
}

/// Random eigenvectors with eigenvalues uniform in `[lo, hi]`.
pub fn random_spectrum_kernel(n: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Result<SpectralKernel> {
    let v = random_orthogonal(n, rng);
    let vals = DVector::from_fn(n, |_, _| lo + (hi - lo) * rng.uniform());
    SpectralKernel::new(v, vals)
}

/// `L = diag(q) S diag(q)` with `S_ij = similarity` for distinct items sharing
/// a cluster id and 0 otherwise.
fn quality_kernel(q: &[f64], cluster: impl Fn(usize) -> Option<usize>, similarity: f64) -> Result<SpectralKernel> {
    let l = SymmetricMatrix::from_upper_fn(q.len(), |i, j| {
        let s = if i == j {
            1.0
        } else if cluster(i).is_some() && cluster(i) == cluster(j) {
            similarity
        } else {
            0.0
        };
        q[i] * s * q[j]
    })?;
    Ok(marginal_from_l(&LKernel::new(l)?))
}

fn check_clusters(cluster_size: usize, similarity: f64) -> Result<()> {
    if cluster_size == 0 || !(0.0..1.0).contains(&similarity) {
        return Err(Error::InvalidInput("cluster size must be positive and similarity in [0, 1)".into()));
    }
    Ok(())
}

fn qualities(count: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Vec<f64> {
    (0..count).map(|_| (lo + (hi - lo) * rng.uniform()).sqrt()).collect()
}

/// Ground truth with strong negative interactions: items are grouped into
/// consecutive clusters of `cluster_size`, `L = diag(q) S diag(q)` with
/// `S_ij = similarity` inside a cluster and 0 across, and item qualities
/// `q_i^2` uniform in `[quality_lo, quality_hi]`.
pub fn clustered_kernel(
    n: usize,
    cluster_size: usize,
    similarity: f64,
    quality_lo: f64,
    quality_hi: f64,
    rng: &mut RngStream,
) -> Result<SpectralKernel> {
    check_clusters(cluster_size, similarity)?;
    let q = qualities(n, quality_lo, quality_hi, rng);
    quality_kernel(&q, |i| Some(i / cluster_size), similarity)
}

/// The first `solo` items are independent with `q_i^2` uniform in `solo_quality`;
/// the rest form clusters as in [`clustered_kernel`] with `q_i^2` uniform in
/// `cluster_quality`.
pub fn mixed_kernel(
    n: usize,
    solo: usize,
    cluster_size: usize,
    similarity: f64,
    solo_quality: (f64, f64),
    cluster_quality: (f64, f64),
    rng: &mut RngStream,
) -> Result<SpectralKernel> {
    check_clusters(cluster_size, similarity)?;
    if solo > n {
        return Err(Error::InvalidInput(format!("{solo} solo items exceed the ground set of {n}")));
    }
    let mut q = qualities(solo, solo_quality.0, solo_quality.1, rng);
    q.extend(qualities(n - solo, cluster_quality.0, cluster_quality.1, rng));
    quality_kernel(&q, |i| i.checked_sub(solo).map(|c| c / cluster_size), similarity)
}

/// `count` draws from `DPP(truth)` whose sizes fall in
/// `[min_size, max_size]`; draws outside are rejected and redrawn.
///
/// Work is split into fixed chunks with one worker stream each, so the output
/// depends only on `seed`.
pub fn synth_generate(
    truth: &SpectralKernel,
    count: usize,
    seed: u64,
    min_size: usize,
    max_size: Option<usize>,
    parallel: bool,
) -> Result<SubsetDataset> {
    let max_size = max_size.unwrap_or(usize::MAX);
    if min_size > max_size {
        return Err(Error::InvalidInput(format!("min size {min_size} exceeds max size {max_size}")));
    }
    let examples = sample_chunked(count, seed, parallel, |rng, len| {
        let mut out = Vec::with_capacity(len);
        let mut attempts = 0usize;
        while out.len() < len {
            let y = sample_dpp(truth, rng);
            attempts += 1;
            if (min_size..=max_size).contains(&y.len()) {
                out.push(y);
            } else if attempts >= REJECTION_WINDOW && out.len() * 1000 < attempts {
                return Err(Error::SizeFilterIncompatible { accepted: out.len(), attempts });
            }
        }
        Ok(out)
    })?;
    SubsetDataset::new(truth.n(), examples)
}
