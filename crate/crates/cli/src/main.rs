//! `dynmetric` command-line tool.
//!
//! Exit codes: 0 on success, 2 for input or usage errors, 3 when the
//! optimizer breaks down numerically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynmetric::{
    cross_validate, generate_synthetic, knn_predict, load_csv, load_queries, standardize,
    train_with, Dataset, Error, LabelColumn, MetricFile, SolverConfig, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "dynmetric", version, about = "LogDet metric learning with per-cycle nearest-neighbor constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a metric from a labeled CSV and write it to a file.
    Train(TrainArgs),
    /// Cross-validate k-NN accuracy of the learned metric against Euclidean distance.
    Eval(EvalArgs),
    /// Predict labels for query rows with k-NN under a saved metric.
    Predict(PredictArgs),
    /// Write a synthetic Gaussian-cluster dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column, by header name or 0-based index.
    #[arg(long = "label-col", default_value = "label")]
    label_col: String,
    /// Use raw features instead of z-scoring them.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Args)]
struct SolverArgs {
    /// Constraint-regeneration cycles.
    #[arg(long, default_value_t = 5)]
    cycles: usize,
    /// Slack trade-off, > 0.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Relative multiplier change that ends a cycle.
    #[arg(long = "conv-tol", default_value_t = 1e-3)]
    conv_tol: f64,
    /// Sweep cap per cycle.
    #[arg(long = "max-sweeps", default_value_t = 1000)]
    max_sweeps: usize,
    /// Percentile of pair distances used as the similar bound.
    #[arg(long = "pct-low", default_value_t = 5.0)]
    pct_low: f64,
    /// Percentile of pair distances used as the dissimilar bound.
    #[arg(long = "pct-high", default_value_t = 95.0)]
    pct_high: f64,
    /// Pairs sampled for the percentiles on large inputs.
    #[arg(long = "pair-cap", default_value_t = 10_000)]
    pair_cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute thresholds under the previous metric every cycle.
    #[arg(long)]
    rescale_thresholds: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            cycles: self.cycles,
            max_sweeps: self.max_sweeps,
            conv_tol: self.conv_tol,
            percentile_low: self.pct_low,
            percentile_high: self.pct_high,
            pair_sample_cap: self.pair_cap,
            seed: self.seed,
            rescale_thresholds: self.rescale_thresholds,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Metric file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training log to write; defaults to `<out>.log`.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Write every cycle's constraint pairs to this file.
    #[arg(long = "dump-pairs")]
    dump_pairs: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Neighbor counts to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Machine-readable JSON report with per-fold accuracies and timings.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Metric file written by `train`.
    #[arg(long)]
    metric: PathBuf,
    /// Labeled training CSV the neighbors are drawn from.
    #[arg(long)]
    train: PathBuf,
    /// Query CSV; a label column, if present, is ignored.
    #[arg(long)]
    query: PathBuf,
    #[arg(long = "label-col", default_value = "label")]
    label_col: String,
    #[arg(long, default_value_t = 1)]
    k: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long = "per-class")]
    per_class: usize,
    #[arg(long)]
    dim: usize,
    /// Leading dimensions that carry class signal.
    #[arg(long)]
    informative: usize,
    #[arg(long, default_value_t = 4.0)]
    sep: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(format!("{e} (try a smaller --gamma)"))
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path, flag: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Input(format!("{flag}: {} is not a readable file", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_training(data: &DataArgs) -> Result<Dataset, Failure> {
    require_file(&data.data, "--data")?;
    Ok(load_csv(&data.data, &LabelColumn::from(data.label_col.as_str()))?)
}

fn cmd_train(args: &TrainArgs) -> CmdResult {
    let cfg = args.solver.config();
    cfg.validate()?;
    let raw = load_training(&args.data)?;
    let (ds, scaling) = if args.data.no_standardize {
        (raw, None)
    } else {
        let (ds, params) = standardize(&raw)?;
        (ds, Some(params))
    };
    let mut dump = String::new();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let (metric, log) = train_with(&ds, &cfg, |ev| {
        let r = ev.record;
        let _ = writeln!(
            out,
            "cycle {}: similar {} dissimilar {} sweeps {} conv {:.3e}",
            r.cycle, r.similar, r.dissimilar, r.sweeps, r.conv
        );
        if args.dump_pairs.is_some() {
            dump.push_str(&ev.pairs.to_text());
        }
    })?;
    drop(out);
    MetricFile::new(&metric, scaling).save(&args.out)?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        p.into()
    });
    write_file(&log_path, &log.to_text())?;
    if let Some(path) = &args.dump_pairs {
        write_file(path, &dump)?;
    }
    println!(
        "wrote {} (dim {}, {} cycles)",
        args.out.display(),
        metric.dim(),
        log.cycles.len()
    );
    eprintln!("training time {:.3} ms", log.total_ms);
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> CmdResult {
    let cfg = args.solver.config();
    cfg.validate()?;
    let ds = load_training(&args.data)?;
    let report = cross_validate(&ds, &cfg, &args.ks, args.folds, cfg.seed, !args.data.no_standardize)?;
    print!("{}", report.table());
    if let Some(path) = &args.report {
        write_file(path, &report.to_json())?;
    }
    let times: Vec<String> = report.train_time_ms.iter().map(|t| format!("{t:.3}")).collect();
    eprintln!("training time per fold (ms): {}", times.join(" "));
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> CmdResult {
    require_file(&args.metric, "--metric")?;
    require_file(&args.train, "--train")?;
    require_file(&args.query, "--query")?;
    let file = MetricFile::load(&args.metric)?;
    let metric = file.metric()?;
    let label_col = LabelColumn::from(args.label_col.as_str());
    let mut train = load_csv(&args.train, &label_col)?;
    let mut queries = load_queries(&args.query, &label_col)?;
    if train.dim() != metric.dim() {
        return Err(Failure::Input(format!(
            "DimensionMismatch: training data has {} features, metric has {}",
            train.dim(),
            metric.dim()
        )));
    }
    if let Some(q) = queries.iter().find(|q| q.len() != metric.dim()) {
        return Err(Failure::Input(format!(
            "DimensionMismatch: query rows have {} features, metric has {}",
            q.len(),
            metric.dim()
        )));
    }
    if let Some(params) = &file.scaling {
        train = params.apply(&train)?;
        queries = queries
            .iter()
            .map(|q| params.apply_vec(q))
            .collect::<Result<_, _>>()?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for q in &queries {
        let label = knn_predict(&train, &metric, q, args.k)?;
        let _ = writeln!(out, "{label}");
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let ds = generate_synthetic(&SyntheticSpec {
        classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        informative_dim: args.informative,
        separation: args.sep,
        noise_scale: args.noise,
        seed: args.seed,
    })?;
    ds.save_csv(&args.out)?;
    println!("wrote {} rows to {}", ds.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
