//! Maximum-likelihood training of marginal kernels: projected gradient ascent
//! on the entries of `K` and EM over the eigendecomposition of `K`.

mod em;
mod estep;
mod ka;

pub use em::{eigenvector_gradient, em_log_likelihood, stiefel_step, train_em};
pub use estep::{
    eigenvalue_update, estep_factors, estep_item_marginals, expected_inclusion, EStepFactors,
};
pub use ka::{ka_gradient, train_ka};

use std::ops::AddAssign;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::kernel::{kernel_to_json, SpectralKernel};
use crate::numerics::{sym_eigendecompose, SymmetricMatrix};

/// Examples per reduction chunk. Chunk boundaries do not depend on the thread
/// count, so parallel and serial sums agree bit for bit.
const REDUCE_CHUNK: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Training stops once an iteration improves the total train
    /// log-likelihood by less than `convergence_tol * n`.
    pub convergence_tol: f64,
    pub max_outer_iters: usize,
    pub max_step_halvings: usize,
    /// EM keeps eigenvalues in `[clamp_eps, 1 - clamp_eps]`.
    pub clamp_eps: f64,
    pub initial_step: f64,
    /// Double the EM step size after each accepted step.
    pub step_warm_start: bool,
    pub seed: u64,
    pub parallel_examples: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            convergence_tol: 1e-5,
            max_outer_iters: 300,
            max_step_halvings: 40,
            clamp_eps: 1e-5,
            initial_step: 1.0,
            step_warm_start: true,
            seed: 0,
            parallel_examples: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidInput("convergence tolerance must be positive".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::InvalidInput("clamp epsilon must lie in (0, 0.5)".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidInput("initial step size must be positive".into()));
        }
        Ok(())
    }

    /// Absolute convergence threshold for a dataset of `n` examples.
    pub fn threshold(&self, n: usize) -> f64 {
        self.convergence_tol * n.max(1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Em,
    Ka,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Em => "em",
            Algorithm::Ka => "ka",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Improvement fell below the threshold.
    Converged,
    /// No trial step improved the likelihood.
    StepSearchExhausted,
    IterationCap,
}

/// One accepted outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub log_likelihood: f64,
    /// Accepted step size, or 0 when only the eigenvalues moved.
    pub eta: f64,
    pub halvings: usize,
    pub millis: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub initial_log_likelihood: f64,
    pub trace: Vec<IterationRecord>,
    pub kernel: SpectralKernel,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub total_millis: f64,
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    algorithm: Algorithm,
    initial_log_likelihood: f64,
    final_log_likelihood: f64,
    iterations: usize,
    converged: bool,
    stop_reason: StopReason,
    total_millis: f64,
    trace: &'a [IterationRecord],
    kernel: Box<RawValue>,
}

impl TrainReport {
    /// Train log-likelihood of the final kernel.
    pub fn final_log_likelihood(&self) -> f64 {
        self.trace.last().map_or(self.initial_log_likelihood, |r| r.log_likelihood)
    }

    /// Accepted log-likelihoods, starting with the initial value.
    pub fn likelihood_path(&self) -> Vec<f64> {
        std::iter::once(self.initial_log_likelihood)
            .chain(self.trace.iter().map(|r| r.log_likelihood))
            .collect()
    }

    /// JSON document with the trace and the final kernel inline.
    pub fn to_json(&self) -> Result<String> {
        let kernel = RawValue::from_string(kernel_to_json(&self.kernel, &serde_json::Value::Null))?;
        let doc = ReportDocument {
            algorithm: self.algorithm,
            initial_log_likelihood: self.initial_log_likelihood,
            final_log_likelihood: self.final_log_likelihood(),
            iterations: self.iterations,
            converged: self.converged,
            stop_reason: self.stop_reason,
            total_millis: self.total_millis,
            trace: &self.trace,
            kernel,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Closest valid marginal kernel in Frobenius norm: eigenvalues clamped into
/// `[0, 1]`.
pub fn project_to_valid(q: &SymmetricMatrix) -> Result<SpectralKernel> {
    let eig = sym_eigendecompose(q)?;
    let values = eig.values.map(|v| v.clamp(0.0, 1.0));
    Ok(SpectralKernel::from_parts_unchecked(eig.vectors, values))
}

/// Eigenvalues clamped into `[eps, 1 - eps]`.
pub fn clamp_eigenvalues(values: &DVector<f64>, eps: f64) -> DVector<f64> {
    values.map(|v| v.clamp(eps, 1.0 - eps))
}

/// Sums `add(acc, i)` over `i in 0..count` in fixed chunks, combining the
/// chunk totals in order.
pub(crate) fn ordered_accumulate<T, Z, F>(count: usize, parallel: bool, zero: Z, add: F) -> Result<T>
where
    T: Send + AddAssign,
    Z: Fn() -> T + Sync,
    F: Fn(&mut T, usize) -> Result<()> + Sync,
{
    let run = |c: usize| -> Result<T> {
        let mut acc = zero();
        for i in c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(count) {
            add(&mut acc, i)?;
        }
        Ok(acc)
    };
    let chunks = count.div_ceil(REDUCE_CHUNK);
    let parts: Vec<Result<T>> = if parallel {
        (0..chunks).into_par_iter().map(run).collect()
    } else {
        (0..chunks).map(run).collect()
    };
    let mut total = zero();
    for p in parts {
        total += p?;
    }
    Ok(total)
}

pub(crate) fn elapsed_millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
