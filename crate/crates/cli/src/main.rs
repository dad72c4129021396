//! `firngraph`: ingest, synth, build-graphs, train, evaluate, report.
//!
//! Exit status is 0 on success, 1 for invalid input or usage, 2 for runtime
//! failures such as diverged training.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use firngraph::graph::{NormScope, GRAPH_VERSION, STATIC_CHANNELS, TARGET_YEARS};
use firngraph::ingest::{self, Dataset, SplitPlan, DATASET_VERSION, DEFAULT_SURFACE_YEAR, MIN_USABLE_LAYERS};
use firngraph::model::checkpoint::{self, CHECKPOINT_VERSION};
use firngraph::model::ModelKind;
use firngraph::synth::{self, SynthParams};
use firngraph::train::{self, ExperimentReport, PreparedSample, TrainConfig, TrialFile, DEFAULT_TRAIN_FRACTION};
use firngraph::{report, write_atomic, Error, Result};

fn version() -> &'static str {
    concat!(
        env!("CARGO_PKG_VERSION"),
        " (dataset format v1, graph format v1, checkpoint format v1)"
    )
}

#[derive(Parser, Debug)]
#[command(name = "firngraph", version = version(), about = "Firn layer thickness prediction with graph-convolutional LSTMs")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn layer masks and geolocation tables into a dataset file.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset file.
    Synth(SynthArgs),
    /// Build normalized graph samples for one split plan.
    BuildGraphs(BuildGraphsArgs),
    /// Run the multi-trial experiment described by a config file.
    Train(TrainArgs),
    /// Score a checkpoint on the test samples of a graph file.
    Evaluate(EvaluateArgs),
    /// Render prediction curves from a trial file, or the table of an experiment.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Also write trial{i}.json split plans into this directory.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Directory of `<segment>.png` layer masks.
    #[arg(long)]
    masks: PathBuf,
    /// Directory of `<segment>.txt` or `.csv` tables of 256 `lat,lon` rows.
    #[arg(long)]
    geo: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = MIN_USABLE_LAYERS)]
    min_layers: usize,
    /// Calendar year of the surface layer.
    #[arg(long, default_value_t = DEFAULT_SURFACE_YEAR)]
    surface_year: i32,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// `key = value` generator parameters; omitted keys keep their defaults.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug)]
struct BuildGraphsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Split plan JSON, as written by `train`, `ingest --splits` or `synth --splits`.
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = NormScope::Train)]
    norm_scope: NormScope,
    #[arg(long, default_value_t = MIN_USABLE_LAYERS)]
    min_layers: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graphs: PathBuf,
    /// Score every sample in the file, not only the test split.
    #[arg(long)]
    all: bool,
    /// Write the scores as JSON here as well as printing them.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false, id = "source")]
struct ReportSource {
    /// Trial file `<kind>/trial{i}.json` from a train run.
    #[arg(long)]
    trial: Option<PathBuf>,
    /// Experiment directory; rewrites `report.csv` from `report.json`.
    #[arg(long)]
    experiment: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    source: ReportSource,
    /// Output directory for curves (default: next to the trial file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Draw only this test segment.
    #[arg(long)]
    segment: Option<String>,
}

fn write_splits(args: &SplitArgs, dataset: &Dataset, min_layers: usize) -> Result<()> {
    let Some(dir) = &args.splits else {
        return Ok(());
    };
    let ids: Vec<String> = dataset
        .records
        .iter()
        .filter(|r| r.layer_count() >= min_layers)
        .map(|r| r.segment_id.clone())
        .collect();
    let plans = ingest::make_splits(&ids, args.trials, args.train_fraction, args.seed)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    for plan in &plans {
        plan.save(&dir.join(format!("trial{}.json", plan.trial_index)))?;
    }
    log::info!("wrote {} split plans to {}", plans.len(), dir.display());
    Ok(())
}

fn ingest_cmd(args: IngestArgs) -> Result<()> {
    log::info!(
        "ingest masks={} geo={} min_layers={} surface_year={}",
        args.masks.display(),
        args.geo.display(),
        args.min_layers,
        args.surface_year
    );
    let summary = ingest::ingest_directory(&args.masks, &args.geo, args.min_layers)?;
    for (id, reason) in &summary.rejected {
        log::warn!("rejected {id}: {reason}");
    }
    println!(
        "{} usable records, {} too shallow, {} rejected",
        summary.records.len(),
        summary.too_shallow,
        summary.rejected.len()
    );
    let dataset = Dataset::new(args.surface_year, summary.records);
    dataset.save(&args.out)?;
    write_splits(&args.split, &dataset, args.min_layers)
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.params).map_err(|e| Error::Io {
        path: args.params.clone(),
        source: e,
    })?;
    let params = SynthParams::from_kv_text(&text)?;
    log::info!("synth params:\n{}", params.to_kv_text());
    let dataset = synth::generate_dataset(&params)?;
    dataset.save(&args.out)?;
    println!("wrote {} synthetic segments to {}", dataset.records.len(), args.out.display());
    write_splits(&args.split, &dataset, MIN_USABLE_LAYERS)
}

fn build_graphs_cmd(args: BuildGraphsArgs) -> Result<()> {
    let dataset = Dataset::load(&args.dataset)?;
    let plan = SplitPlan::load(&args.split)?;
    log::info!(
        "build-graphs trial={} seed={} norm_scope={}",
        plan.trial_index,
        plan.seed,
        args.norm_scope
    );
    let records: Vec<_> = dataset
        .thickness_records()?
        .into_iter()
        .filter(|r| r.layer_count() >= args.min_layers)
        .collect();
    let first_target_year = dataset.surface_year - TARGET_YEARS as i32;
    let graphs = train::build_split_graphs(&records, &plan, args.norm_scope, first_target_year)?;
    graphs.save(&args.out)?;
    println!(
        "wrote {} graph samples ({} train, {} test) to {}",
        graphs.samples.len(),
        graphs.train_count,
        graphs.samples.len() - graphs.train_count,
        args.out.display()
    );
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let config = TrainConfig::load(&args.config)?;
    log::info!("resolved config:\n{}", config.to_kv_text());
    for t in 0..config.trials {
        log::info!("trial {t} seed {}", train::trial_seed(config.seed, t));
    }
    let dataset = Dataset::load(&config.dataset)?;
    let report = train::run_experiment(&config, &dataset)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let params = checkpoint::load(&args.checkpoint)?;
    let graphs = firngraph::graph::GraphFile::load(&args.graphs)?;
    let kind = params.arch.kind;
    let sample = graphs
        .samples
        .first()
        .ok_or_else(|| Error::Invalid(format!("{} holds no samples", args.graphs.display())))?;
    let channels = sample.frames.first().map_or(0, |f| f.ncols());
    let nodes = sample.nodes();
    let provided = if kind == ModelKind::Gcn {
        2 + sample.frames.len()
    } else {
        channels
    };
    let needed_steps = if kind.is_recurrent() { params.arch.steps } else { STATIC_CHANNELS - 2 };
    if provided != params.arch.in_channels || sample.frames.len() != needed_steps {
        return Err(Error::ShapeMismatch {
            context: format!("{} checkpoint {} vs graphs {}", kind, args.checkpoint.display(), args.graphs.display()),
            expected: format!("{needed_steps} steps x {} channels per node", params.arch.in_channels),
            found: format!("{} steps x {nodes}x{channels} features ({provided} model channels)", sample.frames.len()),
        });
    }
    let samples = if args.all { &graphs.samples[..] } else { graphs.test_samples() };
    if samples.is_empty() {
        return Err(Error::Invalid(format!("{} has no test samples", args.graphs.display())));
    }
    let prepared = samples
        .iter()
        .cloned()
        .map(PreparedSample::new)
        .collect::<Result<Vec<_>>>()?;
    let preds = train::predict_all(&params, &prepared)?;
    let targets: Vec<_> = prepared.iter().map(|s| s.targets.clone()).collect();
    let rmse = train::evaluate_rmse(&preds, &targets)?;
    let years: Vec<i32> = (0..TARGET_YEARS as i32).map(|y| graphs.first_target_year + y).collect();
    let summary = serde_json::json!({
        "model": kind.as_str(),
        "parameter_hash": params.fingerprint(),
        "samples": prepared.len(),
        "years": years,
        "per_year_rmse": rmse.per_year,
        "total_rmse": rmse.total,
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    print!("{text}");
    if let Some(out) = &args.out {
        write_atomic(out, text.as_bytes())?;
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    if let Some(trial) = &args.source.trial {
        let file = TrialFile::load(trial)?;
        let out = match &args.out {
            Some(o) => o.clone(),
            None => default_curve_dir(trial),
        };
        let written = report::write_trial_report(&file, &out, args.segment.as_deref())?;
        for p in written {
            println!("{}", p.display());
        }
    } else if let Some(dir) = &args.source.experiment {
        let report = ExperimentReport::load(&dir.join("report.json"))?;
        let out = args.out.clone().unwrap_or_else(|| dir.clone());
        let path = out.join("report.csv");
        write_atomic(&path, report.to_csv().as_bytes())?;
        print!("{}", report.to_csv());
    }
    Ok(())
}

fn default_curve_dir(trial: &Path) -> PathBuf {
    let stem = trial.file_stem().map_or_else(|| "trial".into(), |s| s.to_string_lossy().into_owned());
    trial.with_file_name(format!("{stem}_curves"))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::BuildGraphs(a) => build_graphs_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, _) => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    log::debug!(
        "format versions: dataset {DATASET_VERSION}, graph {GRAPH_VERSION}, checkpoint {CHECKPOINT_VERSION}"
    );
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
