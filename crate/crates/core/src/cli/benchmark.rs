//! EM versus K-Ascent benchmark: repeated trials from seeded initial kernels,
//! scored by held-out log-likelihood.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::datasets::{
    empirical_moments, moments_init, split_train_test, subsample, wishart_init, SubsetDataset,
};
use crate::error::{Error, Result};
use crate::kernel::{dataset_log_likelihood, SpectralKernel};
use crate::learning::{clamp_eigenvalues, train_em, train_ka, TrainConfig, TrainReport};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Wishart,
    Moments,
}

impl InitKind {
    pub fn name(self) -> &'static str {
        match self {
            InitKind::Wishart => "wishart",
            InitKind::Moments => "moments",
        }
    }
}

/// Initial kernel for training on `train`. The moments initializer is
/// clamped into `[clamp_eps, 1 - clamp_eps]` so that every training example
/// has positive probability under it.
pub fn initial_kernel(
    kind: InitKind,
    train: &SubsetDataset,
    clamp_eps: f64,
    rng: &mut RngStream,
) -> Result<SpectralKernel> {
    match kind {
        InitKind::Wishart => wishart_init(train.ground_size(), rng),
        InitKind::Moments => {
            let k = moments_init(&empirical_moments(train)?)?;
            k.with_eigenvalues(clamp_eigenvalues(k.eigenvalues(), clamp_eps))
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchmarkConfig {
    pub trials: usize,
    pub test_fraction: f64,
    /// Subsample each trial's training set to `2N` examples.
    pub low_data: bool,
    pub inits: Vec<InitKind>,
    pub seed: u64,
    /// Training settings shared by both algorithms. Per-example parallelism
    /// is always off so that runtimes are comparable.
    pub train: TrainConfig,
    /// Run trials concurrently. Results are unchanged; runtimes get noisier.
    pub parallel_trials: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRow {
    pub init: InitKind,
    pub trial: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub ka_test_ll: f64,
    pub em_test_ll: f64,
    pub ka_train_ll: f64,
    pub em_train_ll: f64,
    pub ka_offdiag: f64,
    pub em_offdiag: f64,
    pub ka_iters: usize,
    pub em_iters: usize,
    pub ka_millis: f64,
    pub em_millis: f64,
}

impl TrialRow {
    pub fn relative_difference(&self) -> f64 {
        relative_difference(self.em_test_ll, self.ka_test_ll)
    }

    pub fn runtime_ratio(&self) -> f64 {
        self.ka_millis / self.em_millis
    }
}

/// `100 (em - ka) / |ka|`.
pub fn relative_difference(em: f64, ka: f64) -> f64 {
    100.0 * (em - ka) / ka.abs()
}

/// First quartile, median and third quartile, by linear interpolation
/// between order statistics (position `p (n - 1)` in the sorted values).
pub fn quartiles(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some((q(0.25), q(0.5), q(0.75)))
}

#[derive(Clone, Debug)]
pub struct BenchmarkResult {
    pub rows: Vec<TrialRow>,
    /// Test log-likelihood of the planted kernel, when known.
    pub truth_test_ll: Option<f64>,
}

impl BenchmarkResult {
    pub fn rows_for(&self, init: InitKind) -> impl Iterator<Item = &TrialRow> {
        self.rows.iter().filter(move |r| r.init == init)
    }

    /// Per-trial log-likelihoods and kernel statistics. Contains no timings.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from(
            "init,trial,n_train,n_test,ka_test_ll,em_test_ll,relative_difference,\
             ka_train_ll,em_train_ll,ka_offdiag_mass,em_offdiag_mass,ka_iterations,em_iterations\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.init.name(),
                r.trial,
                r.n_train,
                r.n_test,
                r.ka_test_ll,
                r.em_test_ll,
                r.relative_difference(),
                r.ka_train_ll,
                r.em_train_ll,
                r.ka_offdiag,
                r.em_offdiag,
                r.ka_iters,
                r.em_iters
            )
            .unwrap();
        }
        out
    }

    /// Quartiles of the relative difference per initializer.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("init,trials,q1,median,q3,mean,em_better\n");
        for init in [InitKind::Wishart, InitKind::Moments] {
            let diffs: Vec<f64> = self.rows_for(init).map(TrialRow::relative_difference).collect();
            let Some((q1, med, q3)) = quartiles(&diffs) else { continue };
            let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let better = diffs.iter().filter(|&&d| d > 0.0).count();
            writeln!(out, "{},{},{q1},{med},{q3},{mean},{better}", init.name(), diffs.len()).unwrap();
        }
        if let Some(t) = self.truth_test_ll {
            writeln!(out, "truth_test_ll,,,{t},,,").unwrap();
        }
        out
    }

    /// Wall-clock training times and KA/EM ratios.
    pub fn runtimes_csv(&self) -> String {
        let mut out = String::from("init,trial,ka_millis,em_millis,ka_over_em\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.init.name(), r.trial, r.ka_millis, r.em_millis, r.runtime_ratio())
                .unwrap();
        }
        out
    }
}

fn offdiag(report: &TrainReport) -> f64 {
    report.kernel.off_diagonal_mass()
}

/// Runs the benchmark on `data`. The train/test split is drawn once from
/// `seed`; trial `t` draws its initial kernel (and, in low-data mode, its
/// training subsample) from worker stream `t`.
pub fn run_benchmark(
    data: &SubsetDataset,
    cfg: &BenchmarkConfig,
    truth: Option<&SpectralKernel>,
) -> Result<BenchmarkResult> {
    if cfg.trials == 0 || cfg.inits.is_empty() {
        return Err(Error::InvalidInput("benchmark needs at least one trial and one initializer".into()));
    }
    let (train, test) = split_train_test(data, cfg.test_fraction, &mut RngStream::new(cfg.seed))?;
    let train_cfg = TrainConfig { parallel_examples: false, ..cfg.train.clone() };
    train_cfg.validate()?;

    let run_trial = |t: usize| -> Result<Vec<TrialRow>> {
        let mut rng = RngStream::for_worker(cfg.seed, t as u64);
        let train_t = if cfg.low_data {
            subsample(&train, 2 * train.ground_size(), &mut rng)
        } else {
            train.clone()
        };
        let mut rows = Vec::with_capacity(cfg.inits.len());
        for &init in &cfg.inits {
            let k0 = initial_kernel(init, &train_t, train_cfg.clamp_eps, &mut rng)?;
            let ka = train_ka(&k0, train_t.examples(), &train_cfg)?;
            let em = train_em(&k0, train_t.examples(), &train_cfg)?;
            rows.push(TrialRow {
                init,
                trial: t,
                n_train: train_t.len(),
                n_test: test.len(),
                ka_test_ll: dataset_log_likelihood(&ka.kernel, test.examples())?,
                em_test_ll: dataset_log_likelihood(&em.kernel, test.examples())?,
                ka_train_ll: ka.final_log_likelihood(),
                em_train_ll: em.final_log_likelihood(),
                ka_offdiag: offdiag(&ka),
                em_offdiag: offdiag(&em),
                ka_iters: ka.iterations,
                em_iters: em.iterations,
                ka_millis: ka.total_millis,
                em_millis: em.total_millis,
            });
            log::info!(
                "trial {t} ({}): KA {:.4}, EM {:.4}",
                init.name(),
                rows.last().unwrap().ka_test_ll,
                rows.last().unwrap().em_test_ll
            );
        }
        Ok(rows)
    };
    let per_trial: Vec<Result<Vec<TrialRow>>> = if cfg.parallel_trials {
        (0..cfg.trials).into_par_iter().map(run_trial).collect()
    } else {
        (0..cfg.trials).map(run_trial).collect()
    };
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    // group by initializer, trials in order
    rows.sort_by_key(|r| (cfg.inits.iter().position(|&i| i == r.init), r.trial));
    let truth_test_ll = truth.map(|k| dataset_log_likelihood(k, test.examples())).transpose()?;
    Ok(BenchmarkResult { rows, truth_test_ll })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_interpolate() {
        let (q1, m, q3) = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q1, m, q3), (1.75, 2.5, 3.25));
        assert_eq!(quartiles(&[7.0]).unwrap(), (7.0, 7.0, 7.0));
        assert!(quartiles(&[]).is_none());
    }

    #[test]
    fn relative_difference_sign() {
        assert_eq!(relative_difference(-90.0, -100.0), 10.0);
        assert_eq!(relative_difference(-110.0, -100.0), -10.0);
    }
}
