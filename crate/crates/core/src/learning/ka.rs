//! K-Ascent: projected gradient ascent on the entries of `K`.

use std::time::Instant;

use nalgebra::DMatrix;

use super::{elapsed_millis, ordered_accumulate, project_to_valid, Algorithm, IterationRecord, StopReason, TrainConfig, TrainReport};
use crate::error::{Error, Result};
use crate::kernel::{dense_log_likelihood, shifted_for_subset, SpectralKernel, Subset};
use crate::numerics::{Lu, SymmetricMatrix};

/// `sum_i (K - I_Ybar_i)^-1`, the gradient of the train log-likelihood with
/// respect to the entries of `K`.
pub fn ka_gradient(k: &SpectralKernel, examples: &[Subset], parallel: bool) -> Result<SymmetricMatrix> {
    if let Some(i) = examples.iter().position(|y| y.items().last().is_some_and(|&j| j >= k.n())) {
        return Err(Error::InvalidInput(format!("example {i} is outside the ground set")));
    }
    SymmetricMatrix::new(dense_gradient(&k.dense(), examples, parallel)?)
}

fn dense_gradient(k: &DMatrix<f64>, examples: &[Subset], parallel: bool) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    ordered_accumulate(
        examples.len(),
        parallel,
        || DMatrix::zeros(n, n),
        |acc, i| {
            let inv = Lu::new(shifted_for_subset(k, &examples[i]))
                .inverse()
                .ok_or(Error::SingularAtExample(i))?;
            *acc += inv;
            Ok(())
        },
    )
}

/// K-Ascent training. Every iteration starts the line search at
/// `initial_step`, projects each trial point onto valid kernels and halves
/// the step until the likelihood improves.
pub fn train_ka(k0: &SpectralKernel, examples: &[Subset], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("training needs at least one example".into()));
    }
    let start = Instant::now();
    let par = cfg.parallel_examples;
    let mut kernel = k0.clone();
    let mut dense = kernel.dense();
    // surfaces singular or out-of-range examples at the initial kernel
    let mut grad = ka_gradient(&kernel, examples, par)?.into_matrix();
    let mut ll = dense_log_likelihood(&dense, examples, par);
    let initial_log_likelihood = ll;
    let threshold = cfg.threshold(examples.len());
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::IterationCap;

    for iter in 0..cfg.max_outer_iters {
        let iter_start = Instant::now();
        if iter > 0 {
            grad = dense_gradient(&dense, examples, par)?;
        }
        let mut step = cfg.initial_step;
        let mut halvings = 0;
        let mut accepted = None;
        loop {
            let cand = project_to_valid(&SymmetricMatrix::new(&dense + &grad * step)?)?;
            let cand_dense = cand.dense();
            let ll_cand = dense_log_likelihood(&cand_dense, examples, par);
            if ll_cand > ll {
                accepted = Some((cand, cand_dense, ll_cand));
                break;
            }
            if halvings == cfg.max_step_halvings {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        let Some((cand, cand_dense, ll_cand)) = accepted else {
            stop_reason = StopReason::StepSearchExhausted;
            break;
        };
        let delta = ll_cand - ll;
        kernel = cand;
        dense = cand_dense;
        ll = ll_cand;
        trace.push(IterationRecord {
            iter: trace.len() + 1,
            log_likelihood: ll,
            eta: step,
            halvings,
            millis: elapsed_millis(iter_start),
        });
        if delta < threshold {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(TrainReport {
        algorithm: Algorithm::Ka,
        initial_log_likelihood,
        iterations: trace.len(),
        trace,
        kernel,
        converged: stop_reason != StopReason::IterationCap,
        stop_reason,
        total_millis: elapsed_millis(start),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::sample_dpp;
    use crate::kernel::tests::random_kernel;
    use crate::rng::RngStream;

    #[test]
    fn scalar_gradients() {
        let k = SpectralKernel::diagonal(&[0.5]).unwrap();
        let g = ka_gradient(&k, &[Subset::from_mask(1)], false).unwrap();
        assert!((g[(0, 0)] - 2.0).abs() < 1e-15);
        let g = ka_gradient(&k, &[Subset::empty()], false).unwrap();
        assert!((g[(0, 0)] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn singular_example_is_named() {
        let k = SpectralKernel::diagonal(&[0.5, 1.0]).unwrap();
        let ex = [Subset::from_mask(3), Subset::from_mask(1)];
        assert!(matches!(ka_gradient(&k, &ex, false), Err(Error::SingularAtExample(1))));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = RngStream::new(1);
        let k = random_kernel(5, &mut rng);
        let ex: Vec<Subset> = (0..10).map(|_| Subset::from_mask(rng.next_u64() & 31)).collect();
        let g = ka_gradient(&k, &ex, true).unwrap();
        let base = k.dense();
        let h = 1e-5;
        for i in 0..5 {
            for j in i..5 {
                let mut e = DMatrix::zeros(5, 5);
                e[(i, j)] = h;
                e[(j, i)] = h;
                let fd = (dense_log_likelihood(&(&base + &e), &ex, false)
                    - dense_log_likelihood(&(&base - &e), &ex, false))
                    / (2.0 * h);
                let want = if i == j { g[(i, i)] } else { 2.0 * g[(i, j)] };
                assert!((fd - want).abs() <= 1e-4 * want.abs().max(1e-6), "{i},{j}: {fd} vs {want}");
            }
        }
    }

    #[test]
    fn diagonal_kernel_has_diagonal_gradient() {
        let k = SpectralKernel::diagonal(&[0.2, 0.5, 0.7, 0.4]).unwrap();
        let ex: Vec<Subset> = (0..16).map(Subset::from_mask).collect();
        let g = ka_gradient(&k, &ex, false).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn single_item_saturates() {
        let k0 = SpectralKernel::diagonal(&[0.5]).unwrap();
        let ex = vec![Subset::from_mask(1); 10];
        let rep = train_ka(&k0, &ex, &TrainConfig::default()).unwrap();
        assert!(rep.final_log_likelihood() > -1e-9);
        assert!((rep.kernel.eigenvalues()[0] - 1.0).abs() < 1e-9);
        assert!(rep.converged);
    }

    #[test]
    fn ka_is_monotone() {
        let mut rng = RngStream::new(2);
        let truth = random_kernel(10, &mut rng);
        let ex: Vec<Subset> = (0..200).map(|_| sample_dpp(&truth, &mut rng)).collect();
        let rep = train_ka(&truth, &ex, &TrainConfig { max_outer_iters: 50, ..Default::default() }).unwrap();
        let path = rep.likelihood_path();
        assert!(path.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        assert!(rep.final_log_likelihood() >= rep.initial_log_likelihood);
    }
}
