//! Sampling from DPPs and k-DPPs, k-DPP singleton marginals and greedy MAP.
//!
//! Both samplers are two-phase: an index set `J` of eigenvectors is drawn
//! first, then a set is drawn from the elementary DPP spanned by `V^J`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{dense_set_log_likelihood, LKernel, SpectralKernel, Subset};
use crate::numerics::{elementary_symmetric, EspTable};
use crate::rng::RngStream;

/// Eigenvalues at or below this count as zero when computing numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Draws per worker stream in the batch samplers.
const BATCH_CHUNK: usize = 256;

/// Indices of the eigenvectors selected in phase one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElementaryIndexSet(Vec<usize>);

impl ElementaryIndexSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Phase one of DPP sampling: each `j` joins `J` independently with
/// probability `lambda_j`.
pub fn sample_dpp_indices(k: &SpectralKernel, rng: &mut RngStream) -> ElementaryIndexSet {
    ElementaryIndexSet(
        k.eigenvalues()
            .iter()
            .enumerate()
            .filter_map(|(j, &lam)| rng.bernoulli(lam).then_some(j))
            .collect(),
    )
}

/// Phase one of k-DPP sampling: `P(J) ∝ prod_{j in J} mu_j` over `|J| = k`,
/// drawn by the backward recursion on elementary symmetric polynomials.
pub fn sample_k_dpp_indices(mu: &[f64], k: usize, rng: &mut RngStream) -> ElementaryIndexSet {
    let table = EspTable::new(mu, k);
    let mut remaining = k;
    let mut picked = Vec::with_capacity(k);
    for n in (1..=mu.len()).rev() {
        if remaining == 0 {
            break;
        }
        let p = if remaining == n {
            1.0
        } else {
            mu[n - 1] * table.get(remaining - 1, n - 1) / table.get(remaining, n)
        };
        if rng.uniform() < p {
            picked.push(n - 1);
            remaining -= 1;
        }
    }
    picked.reverse();
    ElementaryIndexSet(picked)
}

/// Samples the elementary DPP whose marginal kernel is `B B^T` for a basis
/// `B` with orthonormal columns. Returns exactly `B.ncols()` items.
pub fn sample_elementary(basis: DMatrix<f64>, rng: &mut RngStream) -> Subset {
    let n = basis.nrows();
    let mut b = basis;
    let mut picked = Vec::with_capacity(b.ncols());
    while b.ncols() > 0 {
        let weights: Vec<f64> = (0..n).map(|i| b.row(i).norm_squared()).collect();
        let item = rng.weighted_index(&weights);
        picked.push(item);

        // eliminate the item's coordinate using its largest column
        let pivot = (0..b.ncols())
            .max_by(|&a, &c| b[(item, a)].abs().total_cmp(&b[(item, c)].abs()))
            .unwrap();
        let pivot_col = b.column(pivot).clone_owned();
        let pivot_val = pivot_col[item];
        for c in 0..b.ncols() {
            if c != pivot {
                let f = b[(item, c)] / pivot_val;
                b.column_mut(c).axpy(-f, &pivot_col, 1.0);
            }
        }
        b = b.remove_column(pivot);

        // Gram-Schmidt on what is left
        for c in 0..b.ncols() {
            for _pass in 0..2 {
                for p in 0..c {
                    let proj = b.column(p).dot(&b.column(c));
                    let bp = b.column(p).clone_owned();
                    b.column_mut(c).axpy(-proj, &bp, 1.0);
                }
            }
            let norm = b.column(c).norm();
            b.column_mut(c).unscale_mut(norm);
        }
        for c in 0..b.ncols() {
            b[(item, c)] = 0.0;
        }
    }
    picked.sort_unstable();
    Subset::from_sorted_unchecked(picked)
}

fn columns(v: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(v.nrows(), cols.len(), |r, c| v[(r, cols[c])])
}

/// Draws `Y ~ DPP(K)`.
pub fn sample_dpp(k: &SpectralKernel, rng: &mut RngStream) -> Subset {
    let j = sample_dpp_indices(k, rng);
    sample_elementary(columns(k.eigenvectors(), j.indices()), rng)
}

/// Numerical rank: eigenvalues above [`RANK_TOLERANCE`].
pub fn numerical_rank(l: &LKernel) -> usize {
    l.spectrum().0.iter().filter(|&&m| m > RANK_TOLERANCE).count()
}

/// Draws `Y` with `|Y| = k` and `P(Y) ∝ det(L_Y)`.
pub fn sample_k_dpp(l: &LKernel, k: usize, rng: &mut RngStream) -> Result<Subset> {
    let rank = numerical_rank(l);
    if k > rank {
        return Err(Error::RankTooSmall { k, rank });
    }
    let (mu, vectors) = l.spectrum();
    let j = sample_k_dpp_indices(&mu, k, rng);
    Ok(sample_elementary(columns(vectors, j.indices()), rng))
}

/// Runs `draw` `count` times, in chunks that each own the worker stream
/// `RngStream::for_worker(seed, chunk)`. The output does not depend on the
/// thread count.
pub fn sample_batch<F>(count: usize, seed: u64, parallel: bool, draw: F) -> Result<Vec<Subset>>
where
    F: Fn(&mut RngStream) -> Result<Subset> + Sync,
{
    sample_chunked(count, seed, parallel, |rng, len| (0..len).map(|_| draw(rng)).collect())
}

/// Chunked driver behind [`sample_batch`]: `fill(rng, len)` must return
/// `len` subsets drawn from its chunk's stream.
pub fn sample_chunked<F>(count: usize, seed: u64, parallel: bool, fill: F) -> Result<Vec<Subset>>
where
    F: Fn(&mut RngStream, usize) -> Result<Vec<Subset>> + Sync,
{
    let chunks = count.div_ceil(BATCH_CHUNK);
    let run_chunk = |c: usize| -> Result<Vec<Subset>> {
        let mut rng = RngStream::for_worker(seed, c as u64);
        fill(&mut rng, BATCH_CHUNK.min(count - c * BATCH_CHUNK))
    };
    let parts: Vec<Result<Vec<Subset>>> = if parallel {
        (0..chunks).into_par_iter().map(run_chunk).collect()
    } else {
        (0..chunks).map(run_chunk).collect()
    };
    let mut out = Vec::with_capacity(count);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Singleton marginals of the k-DPP with kernel `L`:
/// `P(j in Y) = sum_r v_r(j)^2 mu_r e_{k-1}^{-r} / e_k`.
pub fn k_dpp_singleton_marginals(l: &LKernel, k: usize) -> Result<Vec<f64>> {
    let (mu, vectors) = l.spectrum();
    let n = mu.len();
    let ek = elementary_symmetric(&mu, k);
    if !(ek > 0.0) {
        return Err(Error::EmptySupport(k));
    }
    let mut marginals = vec![0.0; n];
    if k == 0 {
        return Ok(marginals);
    }
    let mut rest = Vec::with_capacity(n - 1);
    for r in 0..n {
        rest.clear();
        rest.extend(mu.iter().enumerate().filter(|&(i, _)| i != r).map(|(_, &m)| m));
        let weight = mu[r] * elementary_symmetric(&rest, k - 1) / ek;
        if weight == 0.0 {
            continue;
        }
        for (j, m) in marginals.iter_mut().enumerate() {
            *m += vectors[(j, r)] * vectors[(j, r)] * weight;
        }
    }
    Ok(marginals)
}

/// Result of [`greedy_map`].
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyMap {
    pub subset: Subset,
    /// `log P(subset)` under the kernel.
    pub log_likelihood: f64,
    /// Items in the order they were added.
    pub order: Vec<usize>,
    /// False when every augmentation became impossible before `k` items.
    pub complete: bool,
}

/// Greedy MAP: starting from the empty set, repeatedly add the item that
/// maximizes `log P(Y ∪ {i})`, breaking ties by lowest index.
pub fn greedy_map(k: &SpectralKernel, size: usize) -> Result<GreedyMap> {
    let n = k.n();
    if size > n {
        return Err(Error::InvalidInput(format!("greedy size {size} exceeds ground set {n}")));
    }
    let dense = k.dense();
    let mut current = Subset::empty();
    let mut order = Vec::with_capacity(size);
    let mut value = dense_set_log_likelihood(&dense, &current);
    for _ in 0..size {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !current.contains(i)) {
            let v = dense_set_log_likelihood(&dense, &current.with_item(i));
            if v > f64::NEG_INFINITY && best.map_or(true, |(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        match best {
            Some((i, v)) => {
                current = current.with_item(i);
                order.push(i);
                value = v;
            }
            None => {
                log::warn!("greedy MAP stopped at {} items: every augmentation is impossible", order.len());
                return Ok(GreedyMap { subset: current, log_likelihood: value, order, complete: false });
            }
        }
    }
    Ok(GreedyMap { subset: current, log_likelihood: value, order, complete: true })
}
