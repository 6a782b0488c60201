use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icftab::cfd::{write_tensor, CfdEncoder};
use icftab::data::{
    gen_nonsmooth_regression, gen_planted_icf, load_csv, split_dataset, Dataset, Schema, SplitFractions, Task,
};
use icftab::icf::{run_icf, IcfConfig, IcfReport, IcfTest};
use icftab::nn::write_snapshot;
use icftab::report::{build_report, write_report, DEFAULT_SIMS, DEFAULT_TOP_K};
use icftab::search::{
    load_records, run_search, run_trial_with_snapshot, write_record, HyperSample, ModelKind, SearchSpace,
    DEFAULT_RUNS,
};
use icftab::{Error, Result, TrainScalar};

const TARGET_COLUMN: &str = "target";

#[derive(Parser, Debug)]
#[command(name = "icf-tab", version, about = "Categorical feature detection and tabular deep learning search")]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for trial execution.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset as CSV plus schema.
    Gen(GenArgs),
    /// Flag implicitly categorical columns and write the report as JSON.
    Detect(DetectArgs),
    /// Encode a dataset into the binary channel tensor format.
    Encode(EncodeArgs),
    /// Train one configuration and print its run record.
    Train(TrainArgs),
    /// Random hyperparameter search writing JSON-lines run records.
    Search(SearchArgs),
    /// Aggregate run records into budget, profile and heatmap tables.
    Report(ReportArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Generator {
    PlantedIcf,
    Nonsmooth,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Generator,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Category count of the planted column.
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 4)]
    d_noise: usize,
    #[arg(long, default_value_t = 0.1)]
    flip_prob: f64,
    #[arg(long, default_value_t = 20.0)]
    frequency: f64,
    #[arg(long, default_value_t = 0.05)]
    noise_std: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    schema_out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TestArg {
    Chi2,
    Anova,
    MutualInfo,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON detector configuration. Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    test: Option<TestArg>,
    #[arg(long)]
    chi_thresh: Option<f64>,
    #[arg(long)]
    anova_thresh: Option<f64>,
    #[arg(long)]
    mi_thresh: Option<f64>,
    #[arg(long)]
    min_cardinality: Option<usize>,
    #[arg(long)]
    max_cardinality: Option<usize>,
    #[arg(long)]
    auto_low_card: bool,
    /// Detect on the training split of a seeded 60/20/20 split instead of all rows.
    #[arg(long)]
    train_split: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Detection report whose selected columns are one-hot encoded.
    #[arg(long)]
    report: PathBuf,
    /// Keep the standardized raw value in channel 0 of categorical slots.
    #[arg(long)]
    append_raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON hyperparameter sample. Sampled from the search space when absent.
    #[arg(long)]
    sample: Option<PathBuf>,
    #[arg(long, default_value = "mlp")]
    model: String,
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Detect, one-hot the detected columns and embed the rest.
    #[arg(long)]
    combined_mode: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TaskArg {
    Classification,
    Regression,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    records: Vec<PathBuf>,
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SIMS)]
    sims: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
}

fn split(ds: &Dataset, seed: u64) -> Result<Dataset> {
    split_dataset(ds, SplitFractions::default(), seed)
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let schema = Schema::load(&args.schema)?;
    load_csv(&args.data, &schema)
}

fn write_json_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n"))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn gen(args: &GenArgs, seed: u64) -> Result<()> {
    let ds = match args.kind {
        Generator::PlantedIcf => gen_planted_icf(args.n, args.k, args.d_noise, args.flip_prob, seed)?,
        Generator::Nonsmooth => gen_nonsmooth_regression(args.n, args.frequency, args.noise_std, seed)?,
    };
    ds.write_csv(BufWriter::new(File::create(&args.out)?), TARGET_COLUMN)?;
    ds.schema(TARGET_COLUMN).save(&args.schema_out)?;
    log::info!("wrote {} rows × {} columns to {}", ds.n_rows(), ds.n_cols(), args.out.display());
    Ok(())
}

fn detect(args: &DetectArgs, seed: u64) -> Result<()> {
    let mut ds = load(&args.data)?;
    if args.train_split {
        ds = split(&ds, seed)?;
    }
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("detector config {}: {e}", p.display())))?,
        None => IcfConfig {
            test: match ds.task {
                Task::Classification => IcfTest::Chi2,
                Task::Regression => IcfTest::Anova,
            },
            ..IcfConfig::default()
        },
    };
    if let Some(t) = args.test {
        cfg.test = match t {
            TestArg::Chi2 => IcfTest::Chi2,
            TestArg::Anova => IcfTest::Anova,
            TestArg::MutualInfo => IcfTest::MutualInfo,
        };
    }
    cfg.chi_thresh = args.chi_thresh.unwrap_or(cfg.chi_thresh);
    cfg.anova_thresh = args.anova_thresh.unwrap_or(cfg.anova_thresh);
    cfg.mi_thresh = args.mi_thresh.unwrap_or(cfg.mi_thresh);
    cfg.min_cardinality = args.min_cardinality.unwrap_or(cfg.min_cardinality);
    cfg.max_cardinality = args.max_cardinality.unwrap_or(cfg.max_cardinality);
    cfg.auto_low_card |= args.auto_low_card;
    let report = run_icf(&ds, &cfg)?;
    log::info!("flagged columns {:?}", report.flagged());
    write_json_out(args.out.as_deref(), &report.to_json()?)
}

fn encode(args: &EncodeArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let report = IcfReport::from_json(&std::fs::read_to_string(&args.report)?)?;
    if let Some(&j) = report.selected.iter().find(|&&j| j >= ds.n_cols()) {
        return Err(Error::Data(format!("report selects column {j} of a {}-column dataset", ds.n_cols())));
    }
    let encoder = CfdEncoder::fit(&ds, &report.selected, args.append_raw)?;
    let tensor = encoder.encode::<TrainScalar>(&ds.x)?;
    let mut w = BufWriter::new(File::create(&args.out)?);
    write_tensor(&tensor, &mut w)?;
    w.flush()?;
    log::info!("encoded {} × {} × {}", tensor.n, tensor.d, tensor.m);
    Ok(())
}

fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let ds = split(&load(&args.data)?, seed)?;
    let model = ModelKind::parse(&args.model)?;
    let sample: HyperSample = match &args.sample {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("sample {}: {e}", p.display())))?,
        None => icftab::search::sample_runs(&SearchSpace::default(), model, ds.task, 1, seed)
            .pop()
            .expect("one sample"),
    };
    let (record, snapshot) = run_trial_with_snapshot(&ds, model.as_str(), 0, &sample);
    if let (Some(path), Some(snap)) = (&args.snapshot_out, &snapshot) {
        let mut w = BufWriter::new(File::create(path)?);
        write_snapshot(snap, &mut w)?;
        w.flush()?;
    }
    let mut out = std::io::stdout().lock();
    write_record(&mut out, &record)?;
    match &record.error {
        Some(e) => Err(Error::Contract(format!("trial failed: {e}"))),
        None => Ok(()),
    }
}

fn search(args: &SearchArgs, seed: u64, workers: usize) -> Result<()> {
    let ds = split(&load(&args.data)?, seed)?;
    let model = ModelKind::parse(&args.model)?;
    let space = SearchSpace {
        combined_mode: args.combined_mode,
        ..SearchSpace::default()
    };
    let mut w = BufWriter::new(File::options().create(true).append(true).open(&args.out)?);
    let records = run_search(&ds, model, &space, args.runs, seed, workers, |r| {
        write_record(&mut w, r)?;
        w.flush()?;
        Ok(())
    })?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    log::info!("{} runs written to {} ({failed} failed)", records.len(), args.out.display());
    Ok(())
}

fn report(args: &ReportArgs, seed: u64) -> Result<()> {
    let mut records = Vec::new();
    for p in &args.records {
        records.extend(load_records(p)?);
    }
    let task = match args.task {
        TaskArg::Classification => Task::Classification,
        TaskArg::Regression => Task::Regression,
    };
    let report = build_report(&records, task, args.sims, args.top_k, seed)?;
    write_report(&report, &args.out_dir)?;
    log::info!(
        "report over {} datasets ({} excluded) written to {}",
        report.summary.retained.len(),
        report.summary.excluded.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if cli.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    match &cli.command {
        Command::Gen(a) => gen(a, cli.seed),
        Command::Detect(a) => detect(a, cli.seed),
        Command::Encode(a) => encode(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Search(a) => search(a, cli.seed, cli.workers),
        Command::Report(a) => report(a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icf-tab: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_data() || matches!(e, Error::Io(_)) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
