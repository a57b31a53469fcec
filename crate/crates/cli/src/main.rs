//! `cadnn` command-line harness.
//!
//! Exit codes: 0 success, 1 internal failure, 2 configuration or usage error,
//! 3 data error, 4 model build error, 5 weight archive mismatch.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use cadnn::experiment::{self, Loaded};
use cadnn::vision::{decode_image, encode_binary, find_filter, stage_dataset, write_dataset_dir, ValSplit};
use cadnn::zoo::write_atomic;
use cadnn::{Error, ExperimentConfig};

#[derive(Parser)]
#[command(name = "cadnn", version, about = "Train and evaluate small CNN classifiers on grayscale scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model as described by a JSON config and write its artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a trained model on a `<root>/<class>/<image>` tree.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where metrics.json, metrics.csv and confusion_matrix.txt go.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Classify one image and print the class probabilities.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Apply a 3x3 filter from the bank and write a binary PGM.
    Filter {
        #[arg(long)]
        name: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write train.txt / val.txt manifests for a stratified split.
    #[command(group(ArgGroup::new("size").required(true).args(["fraction", "per_class"])))]
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the filter bank.
    Filters,
    /// Write a synthetic four-stage texture dataset for trying the pipeline.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        /// Images per class, in the order Mild, Moderate, Non, VeryMild.
        #[arg(long, num_args = 4, value_delimiter = ',', default_values_t = [12, 4, 12, 12])]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, err: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: err.to_string(),
        }
    }
}

const CONFIG: u8 = 2;
const DATA: u8 = 3;
const BUILD: u8 = 4;
const ARCHIVE: u8 = 5;

/// Default classification of an engine error by its kind.
fn classify(err: Error) -> Failure {
    let code = match &err {
        Error::InvalidArgument(_) | Error::UnknownFilter(_) => CONFIG,
        Error::Dataset(_) | Error::Decode(_) | Error::UnmappedClass(_) | Error::LabelOutOfRange { .. } | Error::Io { .. } => DATA,
        Error::Build { .. } | Error::UnknownLayer(_) | Error::ShapeMismatch { .. } | Error::InvalidShape(_) => BUILD,
        Error::Archive(_) => ARCHIVE,
        _ => 1,
    };
    Failure::new(code, err)
}

fn with_code(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure::new(code, e)
}

fn load_model(path: &Path) -> Result<Loaded, Failure> {
    experiment::load_model(path).map_err(with_code(ARCHIVE))
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(DATA, format!("{}: {e}", path.display())))
}

fn train(config: &Path) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(config).map_err(with_code(CONFIG))?;
    let outcome = experiment::run_training(&cfg).map_err(classify)?;
    println!("weights: {}", outcome.weights.display());
    print!("{}", outcome.metrics.summary());
    Ok(())
}

fn evaluate(model: &Path, data: &Path, out: &Path) -> Result<(), Failure> {
    let loaded = load_model(model)?;
    let set = experiment::load_eval_set(&loaded, data).map_err(with_code(DATA))?;
    let (cm, report) = experiment::evaluate_set(&loaded, &set).map_err(classify)?;
    experiment::write_metrics(out, &cm, &report, &loaded.meta.labels).map_err(classify)?;
    print!("{}", cm.to_grid(loaded.meta.labels.names()));
    print!("{}", report.summary());
    Ok(())
}

fn predict(model: &Path, image: &Path) -> Result<(), Failure> {
    let loaded = load_model(model)?;
    let bytes = read_file(image)?;
    let probs = experiment::predict_bytes(&loaded, &bytes).map_err(|e| match e {
        Error::Decode(_) => Failure::new(DATA, e),
        other => classify(other),
    })?;
    let best = cadnn::argmax(probs.as_slice()).ok_or_else(|| Failure::new(1, "model produced no output"))?;
    let names = loaded.meta.labels.names();
    println!("prediction: {}", names[best]);
    for (name, p) in names.iter().zip(probs.as_slice()) {
        println!("{name}\t{p:.9}");
    }
    Ok(())
}

fn filter(name: &str, input: &Path, out: &Path) -> Result<(), Failure> {
    let f = find_filter(name).map_err(|e| {
        let names: Vec<_> = cadnn::vision::filter_names().collect();
        Failure::new(CONFIG, format!("{e}; available: {}", names.join(", ")))
    })?;
    let img = decode_image(&read_file(input)?).map_err(with_code(DATA))?;
    let filtered = f.apply(&img).map_err(with_code(DATA))?;
    write_atomic(out, &encode_binary(&filtered)).map_err(classify)
}

fn split(data: &Path, fraction: Option<f64>, per_class: Option<usize>, seed: u64, out: &Path) -> Result<(), Failure> {
    let split = match (fraction, per_class) {
        (Some(f), _) => ValSplit::Fraction(f),
        (None, Some(n)) => ValSplit::FixedPerClass(n),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    split.validate().map_err(with_code(CONFIG))?;
    let (train, val) = experiment::write_split(data, split, seed, out).map_err(with_code(DATA))?;
    println!("train: {train}\nval: {val}");
    Ok(())
}

fn fixtures(out: &Path, counts: &[usize], size: usize, seed: u64) -> Result<(), Failure> {
    let counts: [usize; 4] = counts.try_into().map_err(|_| Failure::new(CONFIG, "--counts takes four values"))?;
    let ds = stage_dataset(counts, size, seed).map_err(classify)?;
    write_dataset_dir(&ds, out).map_err(classify)?;
    println!("wrote {} images to {}", ds.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config } => train(&config),
        Command::Evaluate { model, data, out } => evaluate(&model, &data, &out),
        Command::Predict { model, image } => predict(&model, &image),
        Command::Filter { name, input, out } => filter(&name, &input, &out),
        Command::Split {
            data,
            fraction,
            per_class,
            seed,
            out,
        } => split(&data, fraction, per_class, seed, &out),
        Command::Filters => {
            for f in cadnn::vision::FILTER_BANK.iter() {
                println!("{}", f.name);
            }
            Ok(())
        }
        Command::Fixtures { out, counts, size, seed } => fixtures(&out, &counts, size, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
