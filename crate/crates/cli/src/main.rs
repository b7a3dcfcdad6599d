//! `sgdml`: train, evaluate and benchmark triplet-based metric learners.
//!
//! Exit status is 0 on success, 1 when a run fails (a JSON error object is
//! written to stderr) and 2 for invalid flags.

mod bench;
mod prep;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sgdml::data::{format_libsvm, make_synthetic};
use sgdml::eval::classification_error;
use sgdml::optim::fit;
use sgdml::{Algorithm, DmlError, EvalResult, LossKind, MetricMatrix, TrainConfig, TrainReport};

use prep::{prepare, DataInfo, Holdout, Preprocess, Recipe, Source};

#[derive(Parser)]
#[command(name = "sgdml", version, about = "Distance metric learning with projection-sparing SGD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a metric from triplet constraints and score it with k-NN.
    Train(TrainArgs),
    /// Run a JSON-described sweep and print a comparison table.
    Bench(BenchArgs),
    /// Write a synthetic dataset in LIBSVM format.
    Gen(GenArgs),
    /// Score a saved metric with k-NN.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Smooth,
    Hinge,
}

fn parse_pca(s: &str) -> Result<PcaArg, String> {
    if s == "off" {
        return Ok(PcaArg(None));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive rank or `off`, got `{s}`")),
        Ok(p) => Ok(PcaArg(Some(p))),
    }
}

#[derive(Clone, Copy)]
struct PcaArg(Option<usize>);

#[derive(clap::Args)]
struct DataArgs {
    /// LIBSVM training file [default: the built-in synthetic benchmark]
    #[arg(long)]
    train: Option<PathBuf>,
    /// LIBSVM test file, labels matched by name to the training file
    #[arg(long, conflicts_with = "split")]
    test: Option<PathBuf>,
    /// Hold out a random fraction of the training file instead
    #[arg(long)]
    split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    standardize: Switch,
    /// PCA rank applied after loading, or `off`
    #[arg(long, default_value = "off", value_parser = parse_pca)]
    pca: PcaArg,
}

impl DataArgs {
    fn source(&self) -> Source {
        match &self.train {
            Some(p) => Source::Libsvm(p.clone()),
            None => Source::Synthetic(Recipe::standard(self.seed)),
        }
    }

    fn holdout(&self) -> Holdout {
        match (&self.test, self.split) {
            (Some(p), _) => Holdout::File(p.clone()),
            (None, Some(fraction)) => Holdout::Split {
                fraction,
                seed: self.seed,
            },
            (None, None) => Holdout::Fresh,
        }
    }

    fn preprocess(&self) -> Preprocess {
        Preprocess {
            standardize: matches!(self.standardize, Switch::On),
            pca: self.pca.0,
        }
    }
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long, default_value = "mini")]
    algo: Algorithm,
    #[arg(long, default_value_t = TrainConfig::default().eta)]
    eta: f64,
    /// Mini-batch size [default: 10, or 1 for sgd and as]
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().radius)]
    radius: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Smooth)]
    loss: LossArg,
    /// Smoothness of the smooth hinge
    #[arg(long = "L", default_value_t = 3.0)]
    l: f64,
    /// Number of triplet constraints N
    #[arg(long, default_value_t = TrainConfig::default().n_constraints)]
    triplets: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Warmup batches used to estimate W (ha only)
    #[arg(long, default_value_t = TrainConfig::default().warmup_batches)]
    warmup: usize,
    #[arg(long, default_value_t = TrainConfig::default().curve_stride)]
    curve_stride: usize,
    #[command(flatten)]
    data: DataArgs,
    /// Report path [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let loss = match self.loss {
            LossArg::Smooth => LossKind::Smooth { l: self.l },
            LossArg::Hinge => LossKind::Hinge,
        };
        let mut cfg = TrainConfig {
            algorithm: self.algo,
            eta: self.eta,
            radius: self.radius,
            loss,
            n_constraints: self.triplets,
            seed: self.data.seed,
            warmup_batches: self.warmup,
            curve_stride: self.curve_stride,
            ..TrainConfig::default()
        }
        .normalized();
        if let Some(b) = self.batch {
            cfg.batch_size = b;
        }
        cfg
    }
}

#[derive(clap::Args)]
struct BenchArgs {
    /// Flat JSON sweep description
    spec: PathBuf,
    /// JSON table path, overriding the spec's `out`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..))]
    classes: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(2..))]
    dim: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(2..))]
    per_class: u64,
    #[arg(long, default_value_t = 10)]
    noise_dims: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Metric JSON: a `train` report or a bare `{"dim", "data"}` object
    #[arg(long)]
    metric: PathBuf,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
}

impl From<&DmlError> for ErrorInfo {
    fn from(e: &DmlError) -> Self {
        ErrorInfo {
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(DmlError),
}

impl From<DmlError> for Failure {
    fn from(e: DmlError) -> Self {
        Failure::Runtime(e)
    }
}

#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    train: &'a TrainReport,
    #[serde(flatten)]
    eval: &'a EvalResult,
    error_percent: f64,
    dataset: &'a DataInfo,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    #[serde(flatten)]
    eval: &'a EvalResult,
    error_percent: f64,
    dataset: &'a DataInfo,
}

fn io_error(path: &Path, source: std::io::Error) -> DmlError {
    DmlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_error(path, e).into()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_error(Path::new("<stdout>"), e).into()),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let cfg = args.config();
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if args.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let data = prepare(&args.data.source(), &args.data.holdout(), args.data.preprocess())?;
    let (_, report) = fit(&cfg, &data.train)?;
    let eval = classification_error(&report.averaged_metric, &data.train, &data.test, args.k)?;
    let run = RunReport {
        train: &report,
        eval: &eval,
        error_percent: eval.error_percent(),
        dataset: &data.info,
    };
    emit(args.out.as_deref(), &to_json(&run))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.spec).map_err(|e| io_error(&args.spec, e))?;
    let spec = bench::BenchSpec::parse(&text)?;
    let table = bench::run(&spec)?;
    let json = to_json(&table);
    let rendered = bench::render_text(&table);
    match args.out.as_ref().or(spec.out.as_ref()) {
        Some(path) => {
            emit(Some(path), &json)?;
            emit(None, &rendered)
        }
        None => {
            eprint!("{rendered}");
            emit(None, &json)
        }
    }
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let data = make_synthetic(
        args.classes as usize,
        args.dim as usize,
        args.per_class as usize,
        args.noise_dims,
        args.seed,
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    emit(args.out.as_deref(), &format_libsvm(&data))
}

fn load_metric(path: &Path) -> Result<MetricMatrix, DmlError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let parse_err = |e: serde_json::Error| DmlError::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    if let Some(inner) = value.get_mut("averaged_metric") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(parse_err)
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    if args.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let metric = load_metric(&args.metric)?;
    let data = prepare(&args.data.source(), &args.data.holdout(), args.data.preprocess())?;
    let eval = classification_error(&metric, &data.train, &data.test, args.k)?;
    let report = EvalReport {
        eval: &eval,
        error_percent: eval.error_percent(),
        dataset: &data.info,
    };
    emit(args.out.as_deref(), &to_json(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => Cli::command().error(clap::error::ErrorKind::ValueValidation, msg).exit(),
        Err(Failure::Runtime(e)) => {
            let body = serde_json::json!({ "error": ErrorInfo::from(&e) });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
