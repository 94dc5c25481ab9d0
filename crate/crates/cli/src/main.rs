use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use positron::codec::FormatSpec;
use positron::data::{load_preset, Dataset};
use positron::experiment::{dynamic_range_table, run_sweep, DatasetEntry, ExperimentConfig};
use positron::network::{classify, quantize_input, ModelDocument, NetworkModel, REAL_FORMAT};
use positron::trainer::{quantize, train, FloatModel};

#[derive(Parser)]
#[command(name = "positron", version, about = "Exact-MAC inference experiments for posit, float and fixed-point formats")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a double-precision reference model for one dataset.
    Train(TrainArgs),
    /// Round a trained model's parameters into a format.
    Quantize(QuantizeArgs),
    /// Run a model on a dataset split and print predictions and accuracy.
    Infer(InferArgs),
    /// Train per dataset, evaluate every grid format, write CSV and text reports.
    Sweep(SweepArgs),
    /// Print max, min and log10(max/min) for formats.
    DynamicRange(RangeArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Experiment config document.
    #[arg(long, default_value = "config/experiment.json")]
    config: PathBuf,
    /// Overrides the config's data directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl DataArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = self.config.parent().unwrap_or(Path::new("."));
        let mut cfg = ExperimentConfig::load(&self.config)?.rebase(base);
        if let Some(d) = &self.data_dir {
            cfg.data_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

fn entry<'a>(cfg: &'a ExperimentConfig, dataset: &str) -> Result<&'a DatasetEntry> {
    cfg.datasets
        .iter()
        .find(|d| d.preset == dataset)
        .with_context(|| format!("dataset `{dataset}` is not listed in the config"))
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    model: PathBuf,
    /// Target format tag, e.g. posit8es0, float8e4, fixed8q4.
    #[arg(long)]
    format: FormatSpec,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Test,
    Train,
    All,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: String,
    /// Expected model format; a real-valued model is rounded into it.
    #[arg(long)]
    format: Option<FormatSpec>,
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Print only the accuracy line.
    #[arg(long)]
    quiet: bool,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RangeArgs {
    /// Format tags; defaults to the 8-bit formats of the sweep.
    formats: Vec<FormatSpec>,
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.data.load()?;
    let mut settings = entry(&cfg, &a.dataset)?.train.clone();
    if let Some(e) = a.epochs {
        settings.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        settings.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        settings.batch_size = b;
    }
    if let Some(h) = &a.hidden {
        settings.hidden = h.clone();
    }
    let ds = load_preset(&a.dataset, &cfg.data_dir, cfg.seed)?;
    let (xs, ys) = ds.rows(&ds.train);
    let model = train(&xs, &ys, ds.num_classes(), &settings.with_seed(cfg.seed))?;
    model.save(&a.out)?;
    let (tx, ty) = ds.rows(&ds.test);
    println!(
        "{}: trained {} parameters on {} rows; test accuracy {:.1}% on {} rows",
        ds.name,
        model.num_params(),
        xs.len(),
        100.0 * model.accuracy(&tx, &ty),
        tx.len()
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_quantize(a: &QuantizeArgs) -> Result<()> {
    let model = FloatModel::load(&a.model)?;
    let q = quantize(&model, a.format);
    q.save(&a.out)?;
    println!("wrote {} ({})", a.out.display(), a.format);
    Ok(())
}

fn rows_for(ds: &Dataset, split: Split) -> Vec<usize> {
    match split {
        Split::Test => ds.test.clone(),
        Split::Train => ds.train.clone(),
        Split::All => (0..ds.len()).collect(),
    }
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let cfg = a.data.load()?;
    let ds = load_preset(&a.dataset, &cfg.data_dir, cfg.seed)?;
    let idx = rows_for(&ds, a.split);
    let doc = ModelDocument::load(&a.model)?;
    if doc.input_dim != ds.num_features() {
        bail!("model expects {} features but {} has {}", doc.input_dim, ds.name, ds.num_features());
    }
    let (label, predict): (String, Box<dyn Fn(&[f64]) -> Result<usize>>) = if doc.format == REAL_FORMAT && a.format.is_none() {
        let m = FloatModel::from_document(&doc)?;
        ("real".into(), Box::new(move |x| Ok(m.predict(x))))
    } else {
        let m = NetworkModel::from_document(&doc, a.format)?;
        let spec = m.spec;
        (spec.tag(), Box::new(move |x| Ok(classify(&m, &quantize_input(x, spec))?)))
    };
    let mut correct = 0;
    for &i in &idx {
        let p = predict(&ds.features[i])?;
        let hit = p == ds.labels[i];
        correct += hit as usize;
        if !a.quiet {
            println!("row {i}: predicted {} actual {}{}", ds.class_names[p], ds.class_names[ds.labels[i]], if hit { "" } else { "  x" });
        }
    }
    let acc = if idx.is_empty() { 0.0 } else { correct as f64 / idx.len() as f64 };
    println!("{} {}: accuracy {:.1}% ({correct}/{})", ds.name, label, 100.0 * acc, idx.len());
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut cfg = a.data.load()?;
    if let Some(o) = &a.output_dir {
        cfg.output_dir = o.clone();
    }
    let report = run_sweep(&cfg)?;
    let (csv, txt) = report.write(&cfg.output_dir)?;
    print!("{}", report.render());
    println!("\nwrote {} and {}", csv.display(), txt.display());
    Ok(())
}

fn cmd_dynamic_range(a: &RangeArgs) -> Result<()> {
    let specs = if a.formats.is_empty() {
        ["posit8es0", "posit8es1", "posit8es2", "float8e3", "float8e4", "float8e5", "fixed8q4"]
            .iter()
            .map(|t| t.parse())
            .collect::<Result<Vec<FormatSpec>, _>>()?
    } else {
        a.formats.clone()
    };
    print!("{}", dynamic_range_table(&specs));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Quantize(a) => cmd_quantize(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::DynamicRange(a) => cmd_dynamic_range(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
