//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_bench, BenchOptions, DEFAULT_BENCH_ROWS, DEFAULT_REPEATS};
use crate::classifier_pipeline::{classifier_log_csv, evaluate_bundle, train_log_pipeline, LogPipelineBundle};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, MetricsReport};
use crate::matrix::Matrix;
use crate::model::{Activation, Checkpoint, ConstraintMode};
use crate::refmodel::{check_physics, generate_dataset, GeneratorParams};
use crate::schema::{self, OUTPUT_NAMES};
use crate::training::{split_for_training, train_with, TrainConfig};
use crate::transforms::Transform;

#[derive(Debug, Parser)]
#[command(name = "aeromu", version, about = "Aerosol microphysics emulator toolkit")]
pub struct Cli {
    /// Upper bound on worker threads for all parallel work.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset with the reference box model.
    Gen(GenArgs),
    /// Train a regressor (standard transform) or a log-pipeline bundle.
    Train(TrainArgs),
    /// Compute metrics of a checkpoint or bundle on a dataset.
    Eval(EvalArgs),
    /// Write truth and prediction columns for every output.
    Predict(PredictArgs),
    /// Time the reference model against emulator inference.
    Bench(BenchArgs),
    /// Scan a dataset for schema, conservation and positivity problems.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; `.csv` selects the CSV form, anything else the binary form.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator parameters as JSON.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training configuration JSON; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    /// Explicit validation set; otherwise the tail of the training file is held out.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Checkpoint file, or bundle directory for the log transform.
    #[arg(long)]
    pub out: PathBuf,
    /// Epoch log CSV (default: next to the output).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda_mass: Option<f64>,
    #[arg(long)]
    pub mu_pos: Option<f64>,
    #[arg(long)]
    pub transform: Option<Transform>,
    #[arg(long)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub constraint: Option<ConstraintMode>,
    /// Comma-separated layer widths, e.g. 32,128,128,128,28.
    #[arg(long, value_delimiter = ',')]
    pub arch: Option<Vec<usize>>,
    #[arg(long)]
    pub decoupled_weight_decay: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file or bundle directory.
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Overrides the constraint mode stored with the model.
    #[arg(long)]
    pub constraint: Option<ConstraintMode>,
    /// Report JSON path (stdout when absent). The per-variable CSV goes next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub constraint: Option<ConstraintMode>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Trained checkpoint; an untrained network of the default shape otherwise.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BENCH_ROWS)]
    pub n: usize,
    #[arg(long, default_value_t = DEFAULT_REPEATS)]
    pub repeats: usize,
    #[arg(long)]
    pub float32: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub data: PathBuf,
}

/// A trained model as found on disk.
pub enum Model {
    Single(Box<Checkpoint>),
    Bundle(Box<LogPipelineBundle>),
}

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            Ok(Model::Bundle(Box::new(LogPipelineBundle::load(path)?)))
        } else {
            Ok(Model::Single(Box::new(Checkpoint::load(path)?)))
        }
    }

    pub fn predict(&self, x: &Matrix, mode: Option<ConstraintMode>) -> Result<Matrix> {
        match self {
            Model::Single(c) => c.predict_original(x, mode),
            Model::Bundle(b) => b.predict(x, mode),
        }
    }

    pub fn evaluate(&self, data: &Dataset, mode: Option<ConstraintMode>) -> Result<MetricsReport> {
        match self {
            Model::Single(c) => evaluate(c, data, mode),
            Model::Bundle(b) => evaluate_bundle(b, data, mode),
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let params = match &a.params {
        Some(p) => serde_json::from_str::<GeneratorParams>(&fs::read_to_string(p)?)?,
        None => GeneratorParams::default(),
    };
    let data = generate_dataset(a.n, a.seed, &params)?;
    data.save(&a.out)?;
    eprintln!("wrote {} rows to {}", data.len(), a.out.display());
    Ok(())
}

pub fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lambda_mass {
        cfg.lambda_mass = v;
    }
    if let Some(v) = a.mu_pos {
        cfg.mu_pos = v;
    }
    if let Some(v) = a.transform {
        cfg.transform = v;
    }
    if let Some(v) = a.activation {
        cfg.activation = v;
    }
    if let Some(v) = a.constraint {
        cfg.constraint_mode = v;
    }
    if let Some(v) = &a.arch {
        cfg.arch = v.clone();
    }
    if a.decoupled_weight_decay {
        cfg.decoupled_weight_decay = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(a)?;
    let data = Dataset::load(&a.train)?;
    let (train, val) = match &a.val {
        Some(p) => (data, Dataset::load(p)?),
        None => split_for_training(&cfg, &data)?,
    };
    let progress = |r: &crate::training::EpochRecord| {
        eprintln!(
            "epoch {:>4}  loss {:.6e}  val mse {:.6e}  r2 {:.4}  mass {:.3e}  neg {:.4}",
            r.epoch, r.train_loss, r.mse, r.r2, r.mass_violation, r.neg_fraction
        );
    };
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".epochs.csv"));
    match cfg.transform {
        Transform::Standard => {
            let out = train_with(&cfg, &train, &val, progress)?;
            out.checkpoint.save(&a.out)?;
            fs::write(&log_path, out.log.to_csv())?;
        }
        Transform::Log => {
            let out = train_log_pipeline(&cfg, &train, &val, progress)?;
            out.bundle.save(&a.out)?;
            fs::write(&log_path, out.regressor.log.to_csv())?;
            fs::write(
                with_suffix(&a.out, ".classifier_epochs.csv"),
                classifier_log_csv(&out.classifier_log),
            )?;
            if let Some(last) = out.classifier_log.last() {
                eprintln!("classifier accuracy {:.4}", last.accuracy);
            }
        }
    }
    eprintln!("wrote {} and {}", a.out.display(), log_path.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let data = Dataset::load(&a.data)?;
    let report = model.evaluate(&data, a.constraint)?;
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
    if let Some(out) = &a.out {
        fs::write(with_suffix(out, ".per_variable.csv"), report.per_variable_csv())?;
        fs::write(
            with_suffix(out, ".row.csv"),
            format!("{}\n{}\n", crate::evaluation::REPORT_CSV_HEADER, report.csv_row()),
        )?;
    }
    Ok(())
}

/// CSV with 28 `truth_*` columns followed by 28 `pred_*` columns.
pub fn prediction_csv(truth: &Matrix, pred: &Matrix) -> String {
    let mut s = OUTPUT_NAMES
        .iter()
        .map(|n| format!("truth_{n}"))
        .chain(OUTPUT_NAMES.iter().map(|n| format!("pred_{n}")))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for (t, p) in truth.iter_rows().zip(pred.iter_rows()) {
        let row: Vec<String> = t.iter().chain(p).map(f64::to_string).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = Model::load(&a.ckpt)?;
    let data = Dataset::load(&a.input)?;
    let pred = model.predict(data.inputs(), a.constraint)?;
    fs::write(&a.out, prediction_csv(data.outputs(), &pred))?;
    Ok(())
}

fn cmd_bench(a: &BenchArgs, threads: usize) -> Result<()> {
    let ck = a.ckpt.as_deref().map(Checkpoint::load).transpose()?;
    let opts = BenchOptions {
        rows: a.n,
        threads,
        float32: a.float32,
        repeats: a.repeats,
        seed: a.seed,
    };
    let reports = run_bench(ck.as_ref(), &opts)?;
    for r in &reports {
        eprintln!("{:?}: {:.0} rows/s ({:.4} s)", r.model, r.rows_per_s, r.wall_s);
    }
    write_or_print(a.out.as_deref(), &serde_json::to_string_pretty(&reports)?)
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let check = check_physics(&data)?;
    write_or_print(None, &serde_json::to_string_pretty(&check)?)?;
    if check.passed() {
        eprintln!(
            "{}: {} rows, schema {} ok",
            a.data.display(),
            data.len(),
            &schema::schema_hash()[..12]
        );
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "{} fails the physics scan (negative values {}, max relative violation {:?})",
            a.data.display(),
            check.negative_values,
            check.max_relative_violation
        )))
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or(1);
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    if let Some(t) = cli.threads {
        // Fails only if the pool was already built, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Bench(a) => cmd_bench(a, threads),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
