//! The `mapml` command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error
//! (bad flags, missing or unreadable dataset paths).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, Method, MethodSummary, NoiseRow, ScalingRow};
use crate::config::{derive_seed, TrainConfig};
use crate::dataset::Dataset;
use crate::driver::{self, train_mapml_with_log, train_random_triplet_baseline, MONOTONE_TOLERANCE};
use crate::error::Error;
use crate::eval::{self, ReferenceSet};
use crate::io::{self, LabelColumn, MnistSplit, SyntheticSpec};
use crate::latent::latents_for_class;

/// Environment variable naming the default data directory.
pub const DATA_DIR_ENV: &str = "MAPML_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "mapml", version, about = "Metric learning with latent examples and data-dependent margins")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a metric and write a model file.
    Train(TrainArgs),
    /// Evaluate a model file with k-NN.
    Eval(EvalArgs),
    /// Generate a synthetic dataset from random latent examples.
    Synth(SynthArgs),
    /// Compare methods over seeded trials.
    Bench(BenchArgs),
    /// Train on noisy copies of the training set and evaluate on clean data.
    NoiseSweep(NoiseArgs),
}

#[derive(Debug, Clone, Args)]
struct HyperArgs {
    /// Latent examples per class, in percent of the class size.
    #[arg(long, default_value_t = TrainConfig::default().tau)]
    tau: f64,
    /// Pull of each latent example towards its previous position.
    #[arg(long, default_value_t = TrainConfig::default().gamma)]
    gamma: f64,
    /// Weight of the proximal term of the metric stage.
    #[arg(long, default_value_t = TrainConfig::default().lambda)]
    lambda: f64,
    /// Frobenius-norm radius of the metric.
    #[arg(long, default_value_t = TrainConfig::default().delta)]
    delta: f64,
    #[arg(long, default_value_t = TrainConfig::default().outer_iters)]
    outer_iters: usize,
    /// SGD steps per metric stage (even).
    #[arg(long, default_value_t = TrainConfig::default().inner_iters)]
    inner_iters: usize,
    /// Assignment/update sweeps per latent stage.
    #[arg(long, default_value_t = TrainConfig::default().latent_em_iters)]
    latent_em_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().active_set_cap)]
    active_set_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl HyperArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            tau: self.tau,
            gamma: self.gamma,
            lambda: self.lambda,
            delta: self.delta,
            outer_iters: self.outer_iters,
            inner_iters: self.inner_iters,
            latent_em_iters: self.latent_em_iters,
            rng_seed: self.seed,
            active_set_cap: self.active_set_cap,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Training data: a CSV file or a directory holding MNIST IDX files.
    /// Defaults to $MAPML_DATA_DIR/mnist.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Test data, same forms as --data. A MNIST directory defaults to its
    /// test split; a CSV defaults to a seeded 20% hold-out of --data.
    #[arg(long)]
    test: Option<PathBuf>,
    /// CSV label column, by header name or 0-based index (default: last).
    #[arg(long)]
    label_column: Option<String>,
    /// Use a seeded random subset of this many training examples.
    #[arg(long)]
    train_size: Option<usize>,
    /// Use a seeded random subset of this many test examples.
    #[arg(long)]
    test_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    RandomTriplet,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output model file; the sidecar goes next to it with a .meta extension.
    #[arg(long, short)]
    out: PathBuf,
    /// Train the random-triplet SGD baseline instead.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Also write the latent examples as CSV.
    #[arg(long)]
    export_latents: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Latent,
    Original,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test data (CSV or MNIST directory, test split).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training data to use as references in original mode.
    #[arg(long)]
    refs: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Latent)]
    mode: ModeArg,
    #[arg(long, default_value_t = eval::DEFAULT_K)]
    k: usize,
    #[arg(long)]
    label_column: Option<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output CSV of the training sample.
    #[arg(long, short)]
    out: PathBuf,
    /// Second sample from the same latent examples, for testing.
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Ground-truth latent examples as CSV.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 3)]
    latents_per_class: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    samples_per_latent: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct ReportArgs {
    /// Comma-separated methods: euclid, mapml, mapml-o, random-triplet.
    #[arg(long, value_delimiter = ',', default_value = "euclid,mapml,mapml-o,random-triplet")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = eval::DEFAULT_K)]
    k: usize,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    report: ReportArgs,
    /// Latent ratios (percent) for the stage-timing table; empty to skip.
    #[arg(long, value_delimiter = ',')]
    scaling_taus: Vec<f64>,
    /// Also write the stage-timing table as CSV.
    #[arg(long)]
    scaling_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    report: ReportArgs,
    /// Noise standard deviations; entries may be fractions such as 50/255.
    #[arg(long, value_delimiter = ',', default_value = "50/255,100/255,150/255,200/255,250/255")]
    sigmas: Vec<String>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::NoiseSweep(a) => cmd_noise_sweep(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("Run 'mapml --help' for usage.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn label_column(arg: &Option<String>) -> LabelColumn {
    match arg {
        None => LabelColumn::Last,
        Some(s) => match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.clone()),
        },
    }
}

/// Directory used when `--data` is not given.
pub fn default_data_path() -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(|dir| PathBuf::from(dir).join("mnist"))
}

fn load_path(path: &Path, split: MnistSplit, label: &LabelColumn) -> CliResult<Dataset> {
    if !path.exists() {
        return Err(Failure::Usage(format!("dataset path {} does not exist", path.display())));
    }
    let loaded = if path.is_dir() {
        io::load_mnist(path, split)
    } else {
        io::load_csv(path, label)
    };
    loaded.map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", path.display())),
        other => Failure::Runtime(other),
    })
}

fn subset(data: Dataset, size: Option<usize>, seed: u64) -> CliResult<Dataset> {
    match size {
        Some(n) if n < data.len() => Ok(data.sample(n, seed)?),
        _ => Ok(data),
    }
}

/// Loads the training set and, when `want_test`, the test set.
fn load_data(args: &DataArgs, seed: u64, want_test: bool) -> CliResult<(Dataset, Option<Dataset>)> {
    let label = label_column(&args.label_column);
    let path = match args.data.clone().or_else(default_data_path) {
        Some(p) => p,
        None => {
            return Err(Failure::Usage(format!(
                "no dataset given: pass --data or set {DATA_DIR_ENV}"
            )))
        }
    };
    let train = load_path(&path, MnistSplit::Train, &label)?;
    let (train, test) = if !want_test {
        (train, None)
    } else if let Some(test_path) = &args.test {
        let test = load_path(test_path, MnistSplit::Test, &label)?;
        (train, Some(test))
    } else if path.is_dir() {
        let test = load_path(&path, MnistSplit::Test, &label)?;
        (train, Some(test))
    } else {
        let (tr, te) = holdout_split(&train, 0.2, derive_seed(seed, 9_000))?;
        (tr, Some(te))
    };
    let train = subset(train, args.train_size, derive_seed(seed, 9_001))?;
    let test = match test {
        Some(t) => Some(subset(t, args.test_size, derive_seed(seed, 9_002))?),
        None => None,
    };
    Ok((train, test))
}

fn holdout_split(data: &Dataset, fraction: f64, seed: u64) -> CliResult<(Dataset, Dataset)> {
    let n_test = ((data.len() as f64) * fraction).round() as usize;
    if n_test == 0 || n_test >= data.len() {
        return Err(Failure::Usage(format!(
            "{} examples are too few for a hold-out split; pass --test",
            data.len()
        )));
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut is_test = vec![false; data.len()];
    for i in rand::seq::index::sample(&mut rng, data.len(), n_test) {
        is_test[i] = true;
    }
    let (test_rows, train_rows): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| is_test[i]);
    Ok((data.select(&train_rows)?, data.select(&test_rows)?))
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let cfg = args.hyper.config();
    cfg.validate()?;
    let (train, _) = load_data(&args.data, cfg.rng_seed, false)?;
    println!("training on {} examples, {} features, {} classes", train.len(), train.dim(), train.n_classes());
    let (result, method) = match args.baseline {
        Some(Baseline::RandomTriplet) => (train_random_triplet_baseline(&train, &cfg)?, "random-triplet"),
        None => {
            let per_class: Vec<String> = train
                .class_counts()
                .iter()
                .map(|&n| latents_for_class(n, cfg.tau).to_string())
                .collect();
            let m: usize = train.class_counts().iter().map(|&n| latents_for_class(n, cfg.tau)).sum();
            println!("latent examples: m = {m} (per class: {})", per_class.join(","));
            let result = train_mapml_with_log(&train, &cfg, |r| {
                println!(
                    "iter {:>3}  loss {:.6}  m = {}  active {}  latent {:.3}s  active-set {:.3}s  sgd {:.3}s",
                    r.k, r.loss, r.latents, r.active_set_size, r.latent_seconds, r.active_set_seconds, r.metric_seconds
                );
            })?;
            (result, "mapml")
        }
    };
    let trace: Vec<String> = result.loss_trace.iter().map(|v| format!("{v:.6}")).collect();
    println!("loss trace: {}", trace.join(" "));
    if !driver::is_monotone(&result.loss_trace, MONOTONE_TOLERANCE) {
        println!("warning: loss trace is not monotone");
    }
    io::save_model(&args.out, &result, &cfg, method)?;
    println!("model written to {}", args.out.display());
    if let Some(path) = &args.export_latents {
        io::save_latents_csv(path, &result.latent_model)?;
        println!("latent examples written to {}", path.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let label = label_column(&args.label_column);
    let model = io::load_model(&args.model).map_err(|e| match e {
        Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", args.model.display())),
        other => Failure::Runtime(other),
    })?;
    let test_path = args
        .data
        .clone()
        .or_else(default_data_path)
        .ok_or_else(|| Failure::Usage(format!("no test data given: pass --data or set {DATA_DIR_ENV}")))?;
    let test = load_path(&test_path, MnistSplit::Test, &label)?;
    let refs = match args.mode {
        ModeArg::Latent => model.latent_references()?,
        ModeArg::Original => {
            let path = args
                .refs
                .clone()
                .ok_or_else(|| Failure::Usage("original mode needs --refs".into()))?;
            ReferenceSet::original(&load_path(&path, MnistSplit::Train, &label)?)
        }
    };
    let report = eval::evaluate(&test, &refs, &model.metric, args.k)?;
    println!(
        "{}-NN error {:.4}% ({} of {}), references: {} {}, mean query time {:.3e}s",
        report.k,
        100.0 * report.error_rate,
        report.errors,
        report.n_test,
        refs.len(),
        report.reference_mode,
        report.mean_query_time
    );
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        n_classes: args.classes,
        latents_per_class: args.latents_per_class,
        dim: args.dim,
        true_latents: None,
        noise_sigma: args.sigma,
        samples_per_latent: args.samples_per_latent,
        seed: args.seed,
    };
    let (data, truth) = io::generate_synthetic(&spec)?;
    io::save_csv(&args.out, &data)?;
    println!("{} examples written to {}", data.len(), args.out.display());
    if let Some(path) = &args.test_out {
        let (test, _) = io::generate_synthetic(&SyntheticSpec {
            true_latents: Some(truth.latents.clone()),
            seed: derive_seed(args.seed, 1),
            ..spec.clone()
        })?;
        io::save_csv(path, &test)?;
        println!("{} test examples written to {}", test.len(), path.display());
    }
    if let Some(path) = &args.truth {
        io::save_latents_csv(path, &truth)?;
        println!("ground-truth latent examples written to {}", path.display());
    }
    Ok(())
}

fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    let mut out = Vec::new();
    for name in names {
        let m: Method = name.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Failure::Usage("no methods selected".into()));
    }
    Ok(out)
}

/// Parses `0.2` or `50/255`.
pub fn parse_sigma(text: &str) -> Option<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => text.parse::<f64>().ok()?,
    };
    (value.is_finite() && value >= 0.0).then_some(value)
}

/// A table rendered both as aligned text and as CSV from the same cells.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(self.header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> crate::error::Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(e.to_string()))?;
        w.write_record(&self.header).map_err(|e| Error::format(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| Error::format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

const SUMMARY_HEADER: [&str; 6] = ["method", "reference", "mean_error_pct", "std_error_pct", "train_seconds", "query_seconds"];

fn summary_cells(s: &MethodSummary) -> Vec<String> {
    vec![
        s.method.to_string(),
        s.reference_mode.to_string(),
        format!("{:.4}", 100.0 * s.mean_error()),
        format!("{:.4}", 100.0 * s.std_error()),
        format!("{:.3}", s.mean_train_seconds()),
        format!("{:.3e}", s.mean_query_seconds()),
    ]
}

/// Bench summary table.
pub fn summary_table(rows: &[MethodSummary]) -> Table {
    Table {
        header: SUMMARY_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: rows.iter().map(summary_cells).collect(),
    }
}

/// Noise-sweep table: one row per sigma per method.
pub fn noise_table(rows: &[NoiseRow]) -> Table {
    let mut header = vec!["sigma".to_string()];
    header.extend(SUMMARY_HEADER.iter().map(|s| s.to_string()));
    Table {
        header,
        rows: rows
            .iter()
            .map(|r| {
                let mut cells = vec![format!("{:.6}", r.sigma)];
                cells.extend(summary_cells(&r.summary));
                cells
            })
            .collect(),
    }
}

/// Stage-timing table, with each row's growth relative to the previous one.
pub fn scaling_table(rows: &[ScalingRow]) -> Table {
    let header = [
        "tau",
        "latents",
        "latent_seconds",
        "latent_ratio",
        "active_set_seconds",
        "active_set_ratio",
        "active_set_size",
    ];
    let ratio = |now: f64, before: Option<f64>| match before {
        Some(b) if b > 0.0 => format!("{:.3}", now / b),
        _ => "-".to_string(),
    };
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let prev = i.checked_sub(1).map(|j| &rows[j]);
                vec![
                    format!("{}", r.tau),
                    r.latents.to_string(),
                    format!("{:.6}", r.latent_seconds),
                    ratio(r.latent_seconds, prev.map(|p| p.latent_seconds)),
                    format!("{:.6}", r.active_set_seconds),
                    ratio(r.active_set_seconds, prev.map(|p| p.active_set_seconds)),
                    r.active_set_size.to_string(),
                ]
            })
            .collect(),
    }
}

fn emit(table: &Table, csv: &Option<PathBuf>) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(table.text().as_bytes());
    let _ = stdout.flush();
    if let Some(path) = csv {
        table.write_csv(path)?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let cfg = args.hyper.config();
    cfg.validate()?;
    let methods = parse_methods(&args.report.methods)?;
    let (train, test) = load_data(&args.data, cfg.rng_seed, true)?;
    let test = test.expect("test set requested");
    println!(
        "train {} x {}, test {}, {} trial(s), k = {}",
        train.len(),
        train.dim(),
        test.len(),
        args.report.trials,
        args.report.k
    );
    let rows = bench::run_trials(&train, &test, &methods, args.report.trials, &cfg, args.report.k)?;
    emit(&summary_table(&rows), &args.report.csv)?;
    if !args.scaling_taus.is_empty() {
        println!();
        let rows = bench::measure_stage_scaling(&train, &cfg, &args.scaling_taus, 3)?;
        emit(&scaling_table(&rows), &args.scaling_csv)?;
    }
    Ok(())
}

fn cmd_noise_sweep(args: NoiseArgs) -> CliResult<()> {
    let cfg = args.hyper.config();
    cfg.validate()?;
    let methods = parse_methods(&args.report.methods)?;
    let sigmas = args
        .sigmas
        .iter()
        .map(|s| parse_sigma(s).ok_or_else(|| Failure::Usage(format!("invalid sigma '{s}'"))))
        .collect::<CliResult<Vec<f64>>>()?;
    let (train, test) = load_data(&args.data, cfg.rng_seed, true)?;
    let test = test.expect("test set requested");
    let rows = bench::noise_sweep(&train, &test, &methods, &sigmas, args.report.trials, &cfg, args.report.k)?;
    emit(&noise_table(&rows), &args.report.csv)
}
