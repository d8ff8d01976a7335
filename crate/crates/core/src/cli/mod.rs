//! The `dpp-learn` command line.

pub mod benchmark;
pub mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::datasets::{
    apply_filter, clustered_kernel, diversity_stat, empirical_moments, load_dataset, mixed_kernel,
    random_spectrum_kernel, save_dataset, split_train_test, synth_generate, IngestFilter,
    SubsetDataset,
};
use crate::inference::{greedy_map, sample_batch, sample_dpp, sample_k_dpp};
use crate::kernel::{
    dataset_log_likelihood, dense_example_log_likelihoods, l_from_marginal, read_kernel,
    write_kernel, SpectralKernel,
};
use crate::learning::{train_em, train_ka, TrainConfig, TrainReport};
use crate::rng::RngStream;
use benchmark::{initial_kernel, run_benchmark, BenchmarkConfig, InitKind};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "dpp-learn", version, about = "Learn DPP kernels from observed subsets with EM or K-Ascent")]
pub struct Cli {
    /// Worker threads for per-example parallelism (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a kernel on a train split and score the held-out split.
    Train(TrainArgs),
    /// Total and per-example log-likelihood of a dataset under a kernel.
    Evaluate(EvaluateArgs),
    /// Draw subsets from a DPP or, with --k, a k-DPP.
    Sample(SampleArgs),
    /// Greedy MAP set of a given size, with catalog names.
    Recommend(RecommendArgs),
    /// Dataset summary: sizes, item moments and the diversity statistic.
    Stats(StatsArgs),
    /// Synthetic dataset drawn from a ground-truth kernel.
    Synth(SynthArgs),
    /// EM versus K-Ascent over repeated seeded trials.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoArg {
    Em,
    Ka,
}

/// `wishart`, `moments` or `file:PATH`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum InitSpec {
    Kind(InitKind),
    File(PathBuf),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wishart" => Ok(InitSpec::Kind(InitKind::Wishart)),
            "moments" => Ok(InitSpec::Kind(InitKind::Moments)),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(InitSpec::File(PathBuf::from(p))),
                _ => Err(format!("unknown initializer '{s}' (expected wishart, moments or file:PATH)")),
            },
        }
    }
}

fn parse_init_kind(s: &str) -> Result<InitKind, String> {
    match InitSpec::from_str(s)? {
        InitSpec::Kind(k) => Ok(k),
        InitSpec::File(_) => Err("benchmark initializers must be wishart or moments".into()),
    }
}

/// Planted ground truth: `random:N[:LO:HI]` (random eigenvectors,
/// eigenvalues uniform in `[LO, HI]`), `clustered:N:SIZE:SIM[:QLO:QHI]`
/// (clusters of similar items, see `clustered_kernel`) or
/// `mixed:N:SOLO:SIZE:SIM[:SLO:SHI:CLO:CHI]` (see `mixed_kernel`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PlantedSpec {
    Random { n: usize, lo: f64, hi: f64 },
    Clustered { n: usize, cluster_size: usize, similarity: f64, quality_lo: f64, quality_hi: f64 },
    Mixed {
        n: usize,
        solo: usize,
        cluster_size: usize,
        similarity: f64,
        solo_quality: (f64, f64),
        cluster_quality: (f64, f64),
    },
}

impl FromStr for PlantedSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| -> Result<f64, String> {
            parts[i].parse::<f64>().map_err(|e| format!("bad number '{}' in '{s}': {e}", parts[i]))
        };
        let count = |i: usize| -> Result<usize, String> {
            parts[i].parse::<usize>().map_err(|e| format!("bad count '{}' in '{s}': {e}", parts[i]))
        };
        match (parts[0], parts.len()) {
            ("random", 2) => Ok(PlantedSpec::Random { n: count(1)?, lo: 0.05, hi: 0.5 }),
            ("random", 4) => Ok(PlantedSpec::Random { n: count(1)?, lo: num(2)?, hi: num(3)? }),
            ("clustered", 4 | 6) => Ok(PlantedSpec::Clustered {
                n: count(1)?,
                cluster_size: count(2)?,
                similarity: num(3)?,
                quality_lo: if parts.len() == 6 { num(4)? } else { 0.2 },
                quality_hi: if parts.len() == 6 { num(5)? } else { 1.0 },
            }),
            ("mixed", 5 | 9) => {
                let long = parts.len() == 9;
                Ok(PlantedSpec::Mixed {
                    n: count(1)?,
                    solo: count(2)?,
                    cluster_size: count(3)?,
                    similarity: num(4)?,
                    solo_quality: if long { (num(5)?, num(6)?) } else { (5.0, 20.0) },
                    cluster_quality: if long { (num(7)?, num(8)?) } else { (0.5, 2.0) },
                })
            }
            _ => Err(format!(
                "unknown planted kernel '{s}' (expected random:N[:LO:HI], clustered:N:SIZE:SIM[:QLO:QHI] \
                 or mixed:N:SOLO:SIZE:SIM[:SLO:SHI:CLO:CHI])"
            )),
        }
    }
}

impl PlantedSpec {
    pub fn build(&self, rng: &mut RngStream) -> crate::Result<SpectralKernel> {
        match *self {
            PlantedSpec::Random { n, lo, hi } => {
                if n == 0 || !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return Err(crate::Error::InvalidInput(format!(
                        "random planted kernel needs N >= 1 and 0 <= LO <= HI <= 1, got {n}, {lo}, {hi}"
                    )));
                }
                random_spectrum_kernel(n, lo, hi, rng)
            }
            PlantedSpec::Clustered { n, cluster_size, similarity, quality_lo, quality_hi } => {
                clustered_kernel(n, cluster_size, similarity, quality_lo, quality_hi, rng)
            }
            PlantedSpec::Mixed { n, solo, cluster_size, similarity, solo_quality, cluster_quality } => {
                mixed_kernel(n, solo, cluster_size, similarity, solo_quality, cluster_quality, rng)
            }
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainingFlags {
    /// EM keeps eigenvalues in [eps, 1 - eps].
    #[arg(long, default_value_t = 1e-5)]
    pub clamp_eps: f64,
    /// Stop when an iteration improves the train log-likelihood by less than tol * n.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 40)]
    pub max_halvings: usize,
    #[arg(long, default_value_t = 1.0)]
    pub initial_step: f64,
    /// Keep the EM step size at --initial-step instead of doubling it after accepted steps.
    #[arg(long)]
    pub no_warm_start: bool,
}

impl TrainingFlags {
    pub fn config(&self, seed: u64, parallel: bool) -> TrainConfig {
        TrainConfig {
            convergence_tol: self.tol,
            max_outer_iters: self.max_iters,
            max_step_halvings: self.max_halvings,
            clamp_eps: self.clamp_eps,
            initial_step: self.initial_step,
            step_warm_start: !self.no_warm_start,
            seed,
            parallel_examples: parallel,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct FilterFlags {
    /// Keep only the most frequent items.
    #[arg(long)]
    pub top_items: Option<usize>,
    /// Drop items appearing in fewer examples.
    #[arg(long)]
    pub min_item_support: Option<usize>,
    /// Drop examples with fewer items.
    #[arg(long)]
    pub min_set_size: Option<usize>,
    /// Drop examples with more items.
    #[arg(long)]
    pub max_set_size: Option<usize>,
    /// Fail when fewer examples remain.
    #[arg(long)]
    pub min_examples: Option<usize>,
    /// Drop examples left empty by item filtering.
    #[arg(long)]
    pub drop_empty: bool,
}

impl FilterFlags {
    fn filter(&self) -> IngestFilter {
        IngestFilter {
            min_set_size: self.min_set_size,
            max_set_size: self.max_set_size,
            top_items: self.top_items,
            min_item_support: self.min_item_support,
            drop_empty: self.drop_empty,
            min_examples: self.min_examples,
        }
    }

    fn active(&self) -> bool {
        self.top_items.is_some()
            || self.min_item_support.is_some()
            || self.min_set_size.is_some()
            || self.max_set_size.is_some()
            || self.min_examples.is_some()
            || self.drop_empty
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgoArg::Em)]
    pub algo: AlgoArg,
    /// wishart, moments or file:PATH.
    #[arg(long, default_value = "wishart")]
    pub init: InitSpec,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.3)]
    pub test_frac: f64,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[command(flatten)]
    pub filters: FilterFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Write per-example log-likelihoods here instead of printing them.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Sample from the k-DPP with this set size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RecommendArgs {
    #[arg(long)]
    pub kernel: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// Dataset whose catalog supplies item names.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub filters: FilterFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Ground-truth kernel file.
    #[arg(long, conflicts_with = "planted", required_unless_present = "planted")]
    pub kernel: Option<PathBuf>,
    /// Planted ground truth drawn from --seed: random:N[:LO:HI], clustered:N:SIZE:SIM[:QLO:QHI]
    /// or mixed:N:SOLO:SIZE:SIM[:SLO:SHI:CLO:CHI].
    #[arg(long)]
    pub planted: Option<PlantedSpec>,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub min_size: usize,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long, conflicts_with = "planted", required_unless_present = "planted")]
    pub data: Option<PathBuf>,
    /// Benchmark on data synthesized from a planted kernel (see `synth`).
    #[arg(long)]
    pub planted: Option<PlantedSpec>,
    /// Number of synthetic examples with --planted.
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub min_size: usize,
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long, default_value_t = 25)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.3)]
    pub test_frac: f64,
    /// Subsample each trial's training set to 2N examples.
    #[arg(long)]
    pub low_data: bool,
    /// Initializers to compare.
    #[arg(long, value_delimiter = ',', default_value = "wishart,moments", value_parser = parse_init_kind)]
    pub init: Vec<InitKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run trials concurrently; runtimes then include contention.
    #[arg(long)]
    pub parallel_trials: bool,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[command(flatten)]
    pub filters: FilterFlags,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Writes to stdout, treating a closed pipe (`| head`) as success.
fn print_stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.threads > 0 {
        // a second call in the same process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Recommend(a) => cmd_recommend(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
    }
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn load(path: &Path, filters: &FilterFlags) -> anyhow::Result<SubsetDataset> {
    let data = load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if filters.active() {
        Ok(apply_filter(&data, &filters.filter())?)
    } else {
        Ok(data)
    }
}

fn kernel_file(path: &Path) -> anyhow::Result<SpectralKernel> {
    Ok(read_kernel(path).with_context(|| format!("loading kernel {}", path.display()))?.0)
}

fn check_ground(kernel: &SpectralKernel, data: &SubsetDataset) -> anyhow::Result<()> {
    if kernel.n() != data.ground_size() {
        bail!("kernel has {} items but the dataset has {}", kernel.n(), data.ground_size());
    }
    Ok(())
}

/// Write text to `dir/name` and record it in the manifest.
fn emit(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> anyhow::Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(&path)?;
    Ok(path)
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

/// Full-precision value alongside the 4-decimal display value.
fn show(x: f64) -> String {
    format!("{x:.4} (exact {x:?})")
}

fn trace_csv(report: &TrainReport) -> String {
    let mut out = String::from("iter,log_likelihood,eta,halvings\n");
    writeln!(out, "0,{},0,0", report.initial_log_likelihood).unwrap();
    for r in &report.trace {
        writeln!(out, "{},{},{},{}", r.iter, r.log_likelihood, r.eta, r.halvings).unwrap();
    }
    out
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("train", config_json(a), Some(a.seed));
    create_dir(&a.out)?;
    let data = load(&a.data, &a.filters)?;
    manifest.input(&a.data)?;
    let mut rng = RngStream::new(a.seed);
    let (train, test) = split_train_test(&data, a.test_frac, &mut rng)?;
    let cfg = a.training.config(a.seed, true);
    let k0 = match &a.init {
        InitSpec::Kind(kind) => initial_kernel(*kind, &train, cfg.clamp_eps, &mut rng)?,
        InitSpec::File(p) => {
            let k = kernel_file(p)?;
            manifest.input(p)?;
            k
        }
    };
    check_ground(&k0, &data)?;

    let report = match a.algo {
        AlgoArg::Em => train_em(&k0, train.examples(), &cfg)?,
        AlgoArg::Ka => train_ka(&k0, train.examples(), &cfg)?,
    };
    let test_ll = dataset_log_likelihood(&report.kernel, test.examples())?;
    let train_ll = report.final_log_likelihood();

    let train_path = a.out.join("train.jsonl");
    save_dataset(&train, &train_path)?;
    manifest.output(&train_path)?;
    let test_path = a.out.join("test.jsonl");
    save_dataset(&test, &test_path)?;
    manifest.output(&test_path)?;
    let kernel_path = a.out.join("kernel.json");
    let meta = json!({
        "algorithm": report.algorithm.name(),
        "seed": a.seed,
        "iterations": report.iterations,
    });
    write_kernel(&kernel_path, &report.kernel, &meta)?;
    manifest.output(&kernel_path)?;
    emit(&a.out, "report.json", &(report.to_json()? + "\n"), &mut manifest)?;
    emit(&a.out, "trace.csv", &trace_csv(&report), &mut manifest)?;
    let summary = format!(
        "metric,value\nn_train,{}\nn_test,{}\niterations,{}\nconverged,{}\ninitial_train_ll,{}\ntrain_ll,{}\ntest_ll,{}\n",
        train.len(),
        test.len(),
        report.iterations,
        report.converged,
        report.initial_log_likelihood,
        train_ll,
        test_ll
    );
    emit(&a.out, "summary.csv", &summary, &mut manifest)?;
    manifest.timing("training", report.total_millis);
    manifest.timing("total", millis(start));
    manifest.write(&a.out)?;

    println!("algorithm: {}", report.algorithm.name());
    println!("iterations: {} ({:?})", report.iterations, report.stop_reason);
    println!("train log-likelihood: {}", show(train_ll));
    println!("test log-likelihood: {}", show(test_ll));
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let kernel = kernel_file(&a.kernel)?;
    let data = load(&a.data, &FilterFlags::default())?;
    check_ground(&kernel, &data)?;
    let total = dataset_log_likelihood(&kernel, data.examples())?;
    let per = dense_example_log_likelihoods(&kernel.dense(), data.examples(), true);
    println!("examples: {}", data.len());
    println!("total log-likelihood: {}", show(total));
    let mut csv = String::from("example,size,log_likelihood\n");
    for (i, (y, ll)) in data.examples().iter().zip(&per).enumerate() {
        writeln!(csv, "{},{},{}", i + 1, y.len(), ll).unwrap();
    }
    match &a.out {
        Some(dir) => {
            create_dir(dir)?;
            let mut manifest = RunManifest::new("evaluate", config_json(a), None);
            manifest.input(&a.kernel)?;
            manifest.input(&a.data)?;
            emit(dir, "per_example.csv", &csv, &mut manifest)?;
            emit(dir, "summary.csv", &format!("metric,value\nexamples,{}\ntotal_ll,{total}\n", data.len()), &mut manifest)?;
            manifest.timing("total", millis(start));
            manifest.write(dir)?;
        }
        None => print_stdout(&csv)?,
    }
    Ok(())
}

fn cmd_sample(a: &SampleArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let kernel = kernel_file(&a.kernel)?;
    let sets = match a.k {
        Some(k) => {
            let l = l_from_marginal(&kernel)
                .context("k-DPP sampling needs the L kernel, which requires every eigenvalue below 1")?;
            sample_batch(a.count, a.seed, true, |rng| sample_k_dpp(&l, k, rng))?
        }
        None => sample_batch(a.count, a.seed, true, |rng| Ok(sample_dpp(&kernel, rng)))?,
    };
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new("sample", config_json(a), Some(a.seed));
    manifest.input(&a.kernel)?;
    let path = a.out.join("samples.jsonl");
    save_dataset(&SubsetDataset::new(kernel.n(), sets)?, &path)?;
    manifest.output(&path)?;
    manifest.timing("total", millis(start));
    manifest.write(&a.out)?;
    println!("wrote {} samples to {}", a.count, path.display());
    Ok(())
}

fn cmd_recommend(a: &RecommendArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let kernel = kernel_file(&a.kernel)?;
    let names = match &a.data {
        Some(p) => {
            let d = load(p, &FilterFlags::default())?;
            check_ground(&kernel, &d)?;
            Some(d)
        }
        None => None,
    };
    let map = greedy_map(&kernel, a.k)?;
    let name = |i: usize| names.as_ref().map_or_else(|| format!("item {}", i + 1), |d| d.display_name(i));
    let mut csv = String::from("rank,item,name\n");
    for (r, &i) in map.order.iter().enumerate() {
        println!("{:>3}. {:>5}  {}", r + 1, i + 1, name(i));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([(r + 1).to_string(), (i + 1).to_string(), name(i)])?;
        csv.push_str(std::str::from_utf8(&w.into_inner()?)?);
    }
    println!("log-probability of the set: {}", show(map.log_likelihood));
    if !map.complete {
        println!("stopped early: every larger set has probability zero");
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let mut manifest = RunManifest::new("recommend", config_json(a), None);
        manifest.input(&a.kernel)?;
        if let Some(p) = &a.data {
            manifest.input(p)?;
        }
        emit(dir, "recommendation.csv", &csv, &mut manifest)?;
        manifest.timing("total", millis(start));
        manifest.write(dir)?;
    }
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let data = load(&a.data, &a.filters)?;
    let moments = empirical_moments(&data)?;
    let d = diversity_stat(&moments)?;
    println!("items (N): {}", data.ground_size());
    println!("examples (n): {}", data.len());
    println!("mean set size: {:.4}", data.mean_set_size());
    println!("max set size: {}", data.max_set_size());
    println!("diversity d: {d:.6}");
    let hist = data.size_histogram();
    println!("size histogram:");
    for (s, c) in hist.iter().enumerate().filter(|(_, &c)| c > 0) {
        println!("  {s:>4}: {c}");
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let mut manifest = RunManifest::new("stats", config_json(a), None);
        manifest.input(&a.data)?;
        let summary = format!(
            "metric,value\nitems,{}\nexamples,{}\nmean_set_size,{}\nmax_set_size,{}\ndiversity,{d}\n",
            data.ground_size(),
            data.len(),
            data.mean_set_size(),
            data.max_set_size()
        );
        emit(dir, "stats.csv", &summary, &mut manifest)?;
        let mut h = String::from("size,count\n");
        for (s, c) in hist.iter().enumerate() {
            writeln!(h, "{s},{c}").unwrap();
        }
        emit(dir, "histogram.csv", &h, &mut manifest)?;
        let mut m = String::from("i,j,frequency\n");
        for i in 0..moments.n() {
            for j in i..moments.n() {
                writeln!(m, "{},{},{}", i + 1, j + 1, moments.pairs[(i, j)]).unwrap();
            }
        }
        emit(dir, "moments.csv", &m, &mut manifest)?;
        manifest.timing("total", millis(start));
        manifest.write(dir)?;
    }
    Ok(())
}

/// Ground truth for `synth` and `benchmark`: a kernel file, or a planted
/// kernel drawn from `seed`.
fn ground_truth(
    kernel: Option<&PathBuf>,
    planted: Option<&PlantedSpec>,
    seed: u64,
    manifest: &mut RunManifest,
) -> anyhow::Result<SpectralKernel> {
    match (kernel, planted) {
        (Some(p), _) => {
            manifest.input(p)?;
            kernel_file(p)
        }
        (None, Some(spec)) => Ok(spec.build(&mut RngStream::new(seed))?),
        (None, None) => Err(anyhow!("a ground truth is required: pass --kernel or --planted")),
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("synth", config_json(a), Some(a.seed));
    let truth = ground_truth(a.kernel.as_ref(), a.planted.as_ref(), a.seed, &mut manifest)?;
    let data = synth_generate(&truth, a.count, a.seed, a.min_size, a.max_size, true)?;
    create_dir(&a.out)?;
    let path = a.out.join("data.jsonl");
    save_dataset(&data, &path)?;
    manifest.output(&path)?;
    let truth_path = a.out.join("truth.json");
    write_kernel(&truth_path, &truth, &json!({ "seed": a.seed }))?;
    manifest.output(&truth_path)?;
    manifest.timing("total", millis(start));
    manifest.write(&a.out)?;
    println!("wrote {} examples over {} items to {}", data.len(), data.ground_size(), path.display());
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("benchmark", config_json(a), Some(a.seed));
    let (data, truth) = match (&a.data, &a.planted) {
        (Some(p), _) => {
            manifest.input(p)?;
            (load(p, &a.filters)?, None)
        }
        (None, planted) => {
            let truth = ground_truth(None, planted.as_ref(), a.seed, &mut manifest)?;
            let data = synth_generate(&truth, a.count, a.seed, a.min_size, a.max_size, true)?;
            (data, Some(truth))
        }
    };
    let cfg = BenchmarkConfig {
        trials: a.trials,
        test_fraction: a.test_frac,
        low_data: a.low_data,
        inits: a.init.clone(),
        seed: a.seed,
        train: a.training.config(a.seed, false),
        parallel_trials: a.parallel_trials,
    };
    let result = run_benchmark(&data, &cfg, truth.as_ref())?;
    create_dir(&a.out)?;
    emit(&a.out, "benchmark.csv", &result.trials_csv(), &mut manifest)?;
    emit(&a.out, "summary.csv", &result.summary_csv(), &mut manifest)?;
    emit(&a.out, "runtimes.csv", &result.runtimes_csv(), &mut manifest)?;
    manifest.timing("total", millis(start));
    manifest.write(&a.out)?;
    print!("{}", result.summary_csv());
    let ratios: Vec<f64> = result.rows.iter().map(|r| r.runtime_ratio()).collect();
    println!("mean KA/EM runtime ratio: {:.3}", ratios.iter().sum::<f64>() / ratios.len() as f64);
    Ok(())
}
