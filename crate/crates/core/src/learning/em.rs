//! EM over the eigendecomposition `K = V diag(lambda) V^T`: closed-form
//! eigenvalue M-step, then one Stiefel-manifold gradient step on `V`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::estep::check_clamped;
use super::{
    clamp_eigenvalues, eigenvalue_update, elapsed_millis, ordered_accumulate, Algorithm,
    IterationRecord, StopReason, TrainConfig, TrainReport,
};
use crate::error::{Error, Result};
use crate::kernel::{
    l_eigenvalues, l_side_term, log_one_minus_sum, ordered_sum, scaled_rows, weighted_row_gram,
    SpectralKernel, Subset,
};
use crate::numerics::{orthonormality_error, reorthonormalize, skew_matrix_exponential};

/// Orthonormality drift above which a Stiefel step re-orthonormalizes.
const DRIFT_TOLERANCE: f64 = 1e-8;

fn check_examples(n: usize, examples: &[Subset]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("training needs at least one example".into()));
    }
    if let Some(i) = examples.iter().position(|y| y.items().last().is_some_and(|&j| j >= n)) {
        return Err(Error::InvalidInput(format!("example {i} is outside the ground set of size {n}")));
    }
    Ok(())
}

/// Train log-likelihood computed on the `L` side, `O(N |Y|^2)` per example.
/// Eigenvalues must be below 1.
pub fn em_log_likelihood(k: &SpectralKernel, examples: &[Subset], parallel: bool) -> Result<f64> {
    let mu = l_eigenvalues(k)?;
    let v = k.eigenvectors();
    let terms: Vec<f64> = if parallel {
        examples.par_iter().map(|y| l_side_term(v, &mu, y)).collect()
    } else {
        examples.iter().map(|y| l_side_term(v, &mu, y)).collect()
    };
    Ok(ordered_sum(&terms) + examples.len() as f64 * log_one_minus_sum(k))
}

/// Gradient of the EM objective with respect to `V` at `q = p`, with the
/// eigenvalues already replaced by `lambda_new`:
/// `sum_i 2 B_Yi H_i^-1 V_Yi R^2`, `R^2 = lambda_new / (1 - lambda_new)`.
/// Rows of items that appear in no example are zero.
pub fn eigenvector_gradient(
    k: &SpectralKernel,
    lambda_new: &DVector<f64>,
    examples: &[Subset],
    parallel: bool,
) -> Result<DMatrix<f64>> {
    let n = k.n();
    if lambda_new.len() != n {
        return Err(Error::InvalidInput("eigenvalue vector has the wrong length".into()));
    }
    let updated = SpectralKernel::from_parts_unchecked(k.eigenvectors().clone(), lambda_new.clone());
    let r2 = l_eigenvalues(&updated)?;
    let v = k.eigenvectors();
    ordered_accumulate(
        examples.len(),
        parallel,
        || DMatrix::zeros(n, n),
        |acc, i| {
            let y = &examples[i];
            if y.is_empty() {
                return Ok(());
            }
            let h = weighted_row_gram(v, y, &r2);
            let b = scaled_rows(v, y, &r2);
            let x = h.cholesky().ok_or(Error::DegenerateExample(i))?.solve(&b);
            for (a, &row) in y.items().iter().enumerate() {
                for c in 0..n {
                    acc[(row, c)] += 2.0 * x[(a, c)];
                }
            }
            Ok(())
        },
    )
}

/// `V exp(eta (V^T G - G^T V))`, re-orthonormalized when the result drifts
/// more than 1e-8 from orthonormal.
pub fn stiefel_step(v: &DMatrix<f64>, g: &DMatrix<f64>, eta: f64) -> Result<DMatrix<f64>> {
    if eta == 0.0 {
        return Ok(v.clone());
    }
    let x = v.transpose() * g;
    let a = (&x - x.transpose()) * eta;
    let out = v * skew_matrix_exponential(&a)?;
    if orthonormality_error(&out) > DRIFT_TOLERANCE {
        Ok(reorthonormalize(&out))
    } else {
        Ok(out)
    }
}

/// EM training. The eigenvalues of `k0` are first clamped into
/// `[clamp_eps, 1 - clamp_eps]`.
///
/// Each iteration computes the eigenvalue update, takes the eigenvector
/// gradient at the updated eigenvalues and searches for a step size by
/// halving until the likelihood improves. When no step on `V` helps, the
/// eigenvalue update alone is kept if it improves the likelihood; otherwise
/// training stops.
pub fn train_em(k0: &SpectralKernel, examples: &[Subset], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    check_examples(k0.n(), examples)?;
    let start = Instant::now();
    let par = cfg.parallel_examples;
    let mut kernel = SpectralKernel::from_parts_unchecked(
        k0.eigenvectors().clone(),
        clamp_eigenvalues(k0.eigenvalues(), cfg.clamp_eps),
    );
    check_clamped(&kernel, cfg.clamp_eps)?;
    let mut ll = em_log_likelihood(&kernel, examples, par)?;
    let initial_log_likelihood = ll;
    let threshold = cfg.threshold(examples.len());
    let mut eta = cfg.initial_step;
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::IterationCap;

    for _ in 0..cfg.max_outer_iters {
        let iter_start = Instant::now();
        let lambda_new = eigenvalue_update(&kernel, examples, cfg)?;
        let lambda_only = SpectralKernel::from_parts_unchecked(kernel.eigenvectors().clone(), lambda_new.clone());
        let ll_lambda = em_log_likelihood(&lambda_only, examples, par)?;
        let g = eigenvector_gradient(&kernel, &lambda_new, examples, par)?;

        let mut step = eta;
        let mut halvings = 0;
        let mut accepted = None;
        loop {
            let v = stiefel_step(kernel.eigenvectors(), &g, step)?;
            let cand = SpectralKernel::from_parts_unchecked(v, lambda_new.clone());
            let ll_cand = em_log_likelihood(&cand, examples, par)?;
            if ll_cand > ll_lambda {
                accepted = Some((cand, ll_cand));
                break;
            }
            if halvings == cfg.max_step_halvings {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        let v_moved = accepted.is_some();
        let (next, next_ll) = accepted.unwrap_or((lambda_only, ll_lambda));
        if !(next_ll > ll) {
            stop_reason = if v_moved { StopReason::Converged } else { StopReason::StepSearchExhausted };
            break;
        }
        let delta = next_ll - ll;
        kernel = next;
        ll = next_ll;
        if v_moved && cfg.step_warm_start {
            eta = 2.0 * step;
        }
        trace.push(IterationRecord {
            iter: trace.len() + 1,
            log_likelihood: ll,
            eta: if v_moved { step } else { 0.0 },
            halvings,
            millis: elapsed_millis(iter_start),
        });
        if delta < threshold {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(TrainReport {
        algorithm: Algorithm::Em,
        initial_log_likelihood,
        iterations: trace.len(),
        trace,
        kernel,
        converged: stop_reason != StopReason::IterationCap,
        stop_reason,
        total_millis: elapsed_millis(start),
    })
}
