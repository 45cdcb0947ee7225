//! Subcommand argument structs and implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;

use failslow_core::bench::{
    default_thresholds, emit_heatmap_csv, emit_heatmap_svg, failure_rate, parse_heatmap_csv,
    sweep_grid_with, Aggregation, BenchGrid, Metric, PredictionSet, DEFAULT_LOOKBACKS,
};
use failslow_core::csv as fcsv;
use failslow_core::detectors::{load_model, save_model};
use failslow_core::gen::{generate_cluster, ClusterSpec, FaultMix};
use failslow_core::labeling::label_fleet;
use failslow_core::model::{window_split, Date, DiskTrace, FaultLabel};
use failslow_core::rng::derive_seed;
use failslow_core::{Error, Result};

use crate::config::{resolve, resolve_required, ConfigMap, ResolvedConfig};
use crate::model_ops::{detect_model, train_model, ModelKind, TrainKnobs};

fn load_config(path: &Option<PathBuf>) -> Result<ConfigMap> {
    match path {
        Some(p) => ConfigMap::load(p),
        None => Ok(ConfigMap::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn read_traces(path: &Path) -> Result<Vec<DiskTrace>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open traces {}: {e}", path.display())))?;
    fcsv::parse_trace_csv(BufReader::new(file))
}

fn read_labels(path: &Path) -> Result<Vec<FaultLabel>> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open labels {}: {e}", path.display())))?;
    fcsv::parse_labels_csv(BufReader::new(file))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Flat key=value config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub cluster: Option<char>,
    #[arg(long)]
    pub hosts: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    /// Sampling cadence in seconds.
    #[arg(long)]
    pub cadence: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fault_fraction: Option<f64>,
    #[arg(long)]
    pub sustained_severity: Option<f64>,
    #[arg(long)]
    pub spiky_severity: Option<f64>,
    #[arg(long)]
    pub spike_rate: Option<f64>,
    /// Fraction of faults that are sustained (rest are spiky).
    #[arg(long)]
    pub mix_sustained: Option<f64>,
    /// First generated day, ISO date.
    #[arg(long)]
    pub start_day: Option<Date>,
}

fn resolve_cluster_spec(args: &GenArgs, cfg: &ConfigMap, run_seed: u64) -> Result<ClusterSpec> {
    let default = ClusterSpec::default();
    let mix_sustained = resolve(args.mix_sustained, cfg, "mix_sustained", 0.5)?;
    Ok(ClusterSpec {
        cluster_id: resolve(args.cluster, cfg, "cluster", default.cluster_id)?,
        n_hosts: resolve(args.hosts, cfg, "hosts", default.n_hosts)?,
        n_days: resolve(args.days, cfg, "days", default.n_days)?,
        cadence_s: resolve(args.cadence, cfg, "cadence", default.cadence_s)?,
        seed: derive_seed(run_seed, "gen"),
        fault_fraction: resolve(args.fault_fraction, cfg, "fault_fraction", default.fault_fraction)?,
        fault_mix: FaultMix {
            sustained: mix_sustained,
            spiky: 1.0 - mix_sustained,
        },
        sustained_severity: resolve(
            args.sustained_severity,
            cfg,
            "sustained_severity",
            default.sustained_severity,
        )?,
        spiky_severity: resolve(args.spiky_severity, cfg, "spiky_severity", default.spiky_severity)?,
        spike_rate: resolve(args.spike_rate, cfg, "spike_rate", default.spike_rate)?,
        start_day: resolve(args.start_day, cfg, "start_day", default.start_day)?,
        collection: default.collection,
    })
}

fn record_spec(rc: &mut ResolvedConfig, spec: &ClusterSpec, run_seed: u64) {
    rc.set("cluster", spec.cluster_id);
    rc.set("hosts", spec.n_hosts);
    rc.set("days", spec.n_days);
    rc.set("cadence", spec.cadence_s);
    rc.set("seed", run_seed);
    rc.set("fault_fraction", spec.fault_fraction);
    rc.set("mix_sustained", spec.fault_mix.sustained);
    rc.set("sustained_severity", spec.sustained_severity);
    rc.set("spiky_severity", spec.spiky_severity);
    rc.set("spike_rate", spec.spike_rate);
    rc.set("start_day", spec.start_day);
}

fn write_generated(out_dir: &Path, spec: &ClusterSpec) -> Result<()> {
    let cluster = generate_cluster(spec)?;
    let mut trace_buf = Vec::new();
    fcsv::write_trace_csv(&cluster.traces, &mut trace_buf)?;
    fs::write(out_dir.join("traces.csv"), trace_buf)?;
    let mut label_buf = Vec::new();
    fcsv::write_labels_csv(&cluster.truth, &mut label_buf)?;
    fs::write(out_dir.join("truth.csv"), label_buf)?;
    let faults = serde_json::to_string_pretty(&cluster.faults)?;
    fs::write(out_dir.join("faults.json"), faults)?;
    Ok(())
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    let run_seed = resolve(args.seed, &cfg, "seed", 0)?;
    let spec = resolve_cluster_spec(args, &cfg, run_seed)?;
    ensure_dir(&out)?;
    write_generated(&out, &spec)?;
    let mut rc = ResolvedConfig::new("gen");
    record_spec(&mut rc, &spec, run_seed);
    rc.write(&out)?;
    println!(
        "generated cluster {}: {} hosts x 12 disks x {} days -> {}",
        spec.cluster_id,
        spec.n_hosts,
        spec.n_days,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// label
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sigma multiplier for the statistical labeler.
    #[arg(long)]
    pub k: Option<f64>,
}

pub fn cmd_label(args: &LabelArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let traces_path = resolve_required::<PathBuf>(args.traces.clone(), &cfg, "traces")?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    let k = resolve(args.k, &cfg, "k", 3.0)?;
    let traces = read_traces(&traces_path)?;
    let mut windows = Vec::new();
    for t in &traces {
        windows.extend(window_split(t)?);
    }
    let labels = label_fleet(&windows, k)?;
    ensure_dir(&out)?;
    let mut buf = Vec::new();
    fcsv::write_labels_csv(&labels, &mut buf)?;
    fs::write(out.join("labels.csv"), buf)?;
    let mut rc = ResolvedConfig::new("label");
    rc.set("traces", traces_path.display());
    rc.set("k", k);
    rc.write(&out)?;
    println!("labeled {} disk-days -> {}", labels.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Ground-truth labels; required by supervised families.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Last training day (ISO date); later days are the test segment.
    #[arg(long)]
    pub split_day: Option<Date>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_train_pairs: Option<usize>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Feed throughput to sequence models alongside latency.
    #[arg(long)]
    pub use_throughput: bool,
}

fn knobs_from(args: &TrainArgs, cfg: &ConfigMap) -> Result<TrainKnobs> {
    Ok(TrainKnobs {
        window: opt(args.window, cfg, "window")?,
        hidden: opt(args.hidden, cfg, "hidden")?,
        layers: opt(args.layers, cfg, "layers")?,
        epochs: opt(args.epochs, cfg, "epochs")?,
        batch_size: opt(args.batch_size, cfg, "batch_size")?,
        max_train_pairs: opt(args.max_train_pairs, cfg, "max_train_pairs")?,
        trees: opt(args.trees, cfg, "trees")?,
        rounds: opt(args.rounds, cfg, "rounds")?,
        learning_rate: opt(args.learning_rate, cfg, "learning_rate")?,
        use_throughput: args.use_throughput || cfg.get("use_throughput")?.unwrap_or(false),
    })
}

fn opt<T: std::str::FromStr>(flag: Option<T>, cfg: &ConfigMap, key: &str) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => cfg.get(key),
    }
}

/// Neural families also export a bare parameter-map checkpoint.
fn write_checkpoint(out: &Path, model: &failslow_core::detectors::DetectorModel) -> Result<()> {
    use failslow_core::detectors::DetectorModel as M;
    let ckpt = match model {
        M::Lstm(m) => m.checkpoint(),
        M::PatchTst(m) => m.checkpoint(),
        M::Autoencoder(m) => m.checkpoint(),
        _ => return Ok(()),
    };
    let file = fs::File::create(out.join("checkpoint.json"))?;
    ckpt.save(file)?;
    Ok(())
}

fn write_training_log(path: &Path, log: &[(usize, f64, Option<f64>)]) -> Result<()> {
    let mut text = String::from("epoch,train_loss,val_loss\n");
    for (epoch, train, val) in log {
        match val {
            Some(v) => text.push_str(&format!("{epoch},{train},{v}\n")),
            None => text.push_str(&format!("{epoch},{train},\n")),
        }
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let kind: ModelKind = resolve_required(args.model, &cfg, "model")?;
    let traces_path = resolve_required::<PathBuf>(args.traces.clone(), &cfg, "traces")?;
    let split_day: Date = resolve_required(args.split_day, &cfg, "split_day")?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    let seed = resolve(args.seed, &cfg, "seed", 0)?;
    let knobs = knobs_from(args, &cfg)?;

    let traces = read_traces(&traces_path)?;
    let truth_path = match &args.truth {
        Some(p) => Some(p.clone()),
        None => cfg.get::<PathBuf>("truth")?,
    };
    let truth = truth_path.as_deref().map(read_labels).transpose()?;

    let output = train_model(kind, &traces, truth.as_deref(), split_day, seed, &knobs)?;
    ensure_dir(&out)?;
    let file = fs::File::create(out.join("model.json"))?;
    save_model(&output.model, file)?;
    write_training_log(&out.join("training_log.csv"), &output.log)?;
    write_checkpoint(&out, &output.model)?;
    let mut rc = ResolvedConfig::new("train");
    rc.set("model", kind.name());
    rc.set("traces", traces_path.display());
    if let Some(p) = &truth_path {
        rc.set("truth", p.display());
    }
    rc.set("split_day", split_day);
    rc.set("seed", seed);
    rc.write(&out)?;
    println!("trained {} -> {}", kind.name(), out.join("model.json").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Trained model JSON (not used by the training-free llm detector).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub split_day: Option<Date>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sigma multiplier for MSE-thresholding detectors and the llm mock.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Score every Nth sliding test window in the forecasters (1 = all).
    #[arg(long)]
    pub forecast_stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let kind: ModelKind = resolve_required(args.model, &cfg, "model")?;
    let traces_path = resolve_required::<PathBuf>(args.traces.clone(), &cfg, "traces")?;
    let split_day: Date = resolve_required(args.split_day, &cfg, "split_day")?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    let seed = resolve(args.seed, &cfg, "seed", 0)?;
    let k = resolve(args.k, &cfg, "k", 3.0)?;
    let workers = resolve(args.workers, &cfg, "workers", default_workers())?;

    let traces = read_traces(&traces_path)?;
    let model_file = match &args.model_file {
        Some(p) => Some(p.clone()),
        None => cfg.get::<PathBuf>("model_file")?,
    };
    let model = model_file
        .as_deref()
        .map(|p| -> Result<_> {
            let file = fs::File::open(p)
                .map_err(|e| Error::Config(format!("cannot open model {}: {e}", p.display())))?;
            load_model(BufReader::new(file))
        })
        .transpose()?;

    let forecast_stride = resolve(args.forecast_stride, &cfg, "forecast_stride", 4)?;
    let preds = detect_model(
        kind,
        model.as_ref(),
        &traces,
        split_day,
        seed,
        k,
        workers,
        forecast_stride,
    )?;
    ensure_dir(&out)?;
    let mut buf = Vec::new();
    fcsv::write_predictions_csv(&preds.to_rows(), &mut buf)?;
    fs::write(out.join("predictions.csv"), buf)?;
    let mut rc = ResolvedConfig::new("detect");
    rc.set("model", kind.name());
    rc.set("traces", traces_path.display());
    rc.set("split_day", split_day);
    rc.set("seed", seed);
    rc.set("k", k);
    rc.write(&out)?;
    println!(
        "detected with {}: {} disk-day scores -> {}",
        kind.name(),
        preds.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Prediction CSVs; may be passed multiple times.
    #[arg(long = "predictions")]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Evaluation date; defaults to the last truth date.
    #[arg(long)]
    pub eval_date: Option<Date>,
    /// Comma-separated lookback days.
    #[arg(long)]
    pub lookbacks: Option<String>,
    /// Comma-separated thresholds.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// Lookback aggregation: max (default) or mean.
    #[arg(long)]
    pub agg: Option<String>,
    /// Score threshold for the failure-rate table.
    #[arg(long)]
    pub rate_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

/// Groups prediction rows by model name.
fn load_prediction_sets(paths: &[PathBuf]) -> Result<Vec<PredictionSet>> {
    let mut by_model: BTreeMap<String, Vec<fcsv::PredictionRow>> = BTreeMap::new();
    for path in paths {
        let file = fs::File::open(path).map_err(|e| {
            Error::Config(format!("cannot open predictions {}: {e}", path.display()))
        })?;
        for row in fcsv::parse_predictions_csv(BufReader::new(file))? {
            by_model.entry(row.model.clone()).or_default().push(row);
        }
    }
    by_model
        .into_iter()
        .map(|(model, rows)| PredictionSet::from_rows(model, &rows))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    out: &Path,
    sets: &[PredictionSet],
    truth: &[FaultLabel],
    eval_date: Date,
    lookbacks: &[u32],
    thresholds: &[f64],
    agg: Aggregation,
    rate_threshold: f64,
) -> Result<Vec<BenchGrid>> {
    ensure_dir(out)?;
    let mut rate_table = String::from("model,failure_rate_pct,total,failures\n");
    let mut grids = Vec::new();
    for preds in sets {
        let grid = sweep_grid_with(preds, truth, eval_date, lookbacks, thresholds, agg)?;
        for metric in [Metric::Precision, Metric::Recall] {
            let csv = emit_heatmap_csv(&grid, metric);
            fs::write(out.join(format!("{}_{}.csv", preds.model, metric.name())), csv)?;
            let svg = emit_heatmap_svg(&grid, metric);
            fs::write(out.join(format!("{}_{}.svg", preds.model, metric.name())), svg)?;
        }
        let window = prediction_window(preds)?;
        let rate = failure_rate(preds, rate_threshold, window)?;
        rate_table.push_str(&format!(
            "{},{:.2},{},{}\n",
            preds.model,
            rate.rate(),
            rate.total,
            rate.failures
        ));
        grids.push(grid);
    }
    fs::write(out.join("failure_rates.csv"), rate_table)?;
    Ok(grids)
}

fn prediction_window(preds: &PredictionSet) -> Result<(Date, Date)> {
    let mut dates = preds.iter().map(|((_, d), _)| *d);
    let first = dates
        .next()
        .ok_or(Error::EmptyInput("prediction set is empty"))?;
    let (lo, hi) = preds
        .iter()
        .map(|((_, d), _)| *d)
        .fold((first, first), |(lo, hi), d| (lo.min(d), hi.max(d)));
    Ok((lo, hi))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let truth_path = resolve_required::<PathBuf>(args.truth.clone(), &cfg, "truth")?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    if args.predictions.is_empty() {
        return Err(Error::Config("at least one --predictions file is required".into()));
    }
    let truth = read_labels(&truth_path)?;
    let eval_date = match args.eval_date {
        Some(d) => d,
        None => truth
            .iter()
            .map(|l| l.date)
            .max()
            .ok_or(Error::EmptyInput("empty truth file"))?,
    };
    let lookbacks = match &args.lookbacks {
        Some(text) => parse_list::<u32>(text, "lookback")?,
        None => DEFAULT_LOOKBACKS.to_vec(),
    };
    let thresholds = match &args.thresholds {
        Some(text) => parse_list::<f64>(text, "threshold")?,
        None => default_thresholds(),
    };
    let agg = match args.agg.as_deref() {
        None | Some("max") => Aggregation::Max,
        Some("mean") => Aggregation::Mean,
        Some(other) => return Err(Error::Config(format!("unknown aggregation {other:?}"))),
    };
    let rate_threshold = resolve(args.rate_threshold, &cfg, "rate_threshold", 0.5)?;
    let sets = load_prediction_sets(&args.predictions)?;
    run_bench(
        &out,
        &sets,
        &truth,
        eval_date,
        &lookbacks,
        &thresholds,
        agg,
        rate_threshold,
    )?;
    let mut rc = ResolvedConfig::new("bench");
    rc.set("truth", truth_path.display());
    rc.set("eval_date", eval_date);
    rc.set(
        "lookbacks",
        lookbacks.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
    );
    rc.set(
        "thresholds",
        thresholds.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>().join(","),
    );
    rc.set("rate_threshold", rate_threshold);
    rc.write(&out)?;
    println!("benchmarked {} model(s) -> {}", sets.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `bench`.
    #[arg(long)]
    pub bench_dir: PathBuf,
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let summary = build_report(&args.bench_dir)?;
    fs::write(args.bench_dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Combines failure rates with each model's best grid cells.
pub fn build_report(bench_dir: &Path) -> Result<String> {
    let rates_path = bench_dir.join("failure_rates.csv");
    let rates_text = fs::read_to_string(&rates_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", rates_path.display())))?;
    let mut out = String::from(
        "model,failure_rate_pct,total,failures,best_precision,best_precision_lookback,best_precision_threshold,best_recall,best_recall_lookback,best_recall_threshold\n",
    );
    for line in rates_text.lines().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: format!("bad failure_rates row {line:?}"),
            });
        }
        let model = fields[0];
        out.push_str(line);
        for metric in ["precision", "recall"] {
            let grid_path = bench_dir.join(format!("{model}_{metric}.csv"));
            let text = fs::read_to_string(&grid_path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", grid_path.display())))?;
            let (lookbacks, thresholds, values) = parse_heatmap_csv(&text)?;
            let mut best: Option<(f64, u32, f64)> = None;
            for (li, &l) in lookbacks.iter().enumerate() {
                for (ti, &t) in thresholds.iter().enumerate() {
                    if let Some(v) = values[li * thresholds.len() + ti] {
                        if best.is_none_or(|(bv, _, _)| v > bv) {
                            best = Some((v, l, t));
                        }
                    }
                }
            }
            match best {
                Some((v, l, t)) => out.push_str(&format!(",{v:.4},{l},{t:.1}")),
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Run configuration file (required; flags below override it).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

/// End-to-end run: generate, label, train + detect every configured
/// model, benchmark, and report. Byte-deterministic given the config.
pub fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let cfg = ConfigMap::load(&args.config)?;
    let out = resolve_required::<PathBuf>(args.out.clone(), &cfg, "out")?;
    let run_seed = resolve(args.seed, &cfg, "seed", 0)?;
    let workers = resolve(args.workers, &cfg, "workers", default_workers())?;
    let forecast_stride = cfg.get::<usize>("forecast_stride")?.unwrap_or(4);
    let k = cfg.get::<f64>("k")?.unwrap_or(3.0);

    let gen_args = GenArgs {
        config: None,
        out: None,
        cluster: None,
        hosts: None,
        days: None,
        cadence: None,
        seed: None,
        fault_fraction: None,
        sustained_severity: None,
        spiky_severity: None,
        spike_rate: None,
        mix_sustained: None,
        start_day: None,
    };
    let spec = {
        let mut spec = resolve_cluster_spec(&gen_args, &cfg, run_seed)?;
        spec.seed = derive_seed(run_seed, "gen");
        spec
    };
    let split_day = match cfg.get::<Date>("split_day")? {
        Some(d) => d,
        None => {
            let offset = cfg
                .get::<i64>("split_offset")?
                .unwrap_or_else(|| (spec.n_days as i64 + 1) / 2);
            spec.start_day.add_days(offset - 1)
        }
    };
    let eval_date = cfg
        .get::<Date>("eval_date")?
        .unwrap_or_else(|| spec.start_day.add_days(spec.n_days as i64 - 1));
    let models_text = cfg
        .raw("models")
        .unwrap_or("csr,multipred,iforest,autoencoder,svm,llm")
        .to_string();
    let models: Vec<ModelKind> = models_text
        .split(',')
        .map(|m| m.trim().parse())
        .collect::<Result<_>>()?;

    ensure_dir(&out)?;
    write_generated(&out, &spec)?;
    let traces = read_traces(&out.join("traces.csv"))?;
    let truth = read_labels(&out.join("truth.csv"))?;

    // Statistical labels for reference alongside the generator truth.
    let mut windows = Vec::new();
    for t in &traces {
        windows.extend(window_split(t)?);
    }
    let labels = label_fleet(&windows, k)?;
    let mut buf = Vec::new();
    fcsv::write_labels_csv(&labels, &mut buf)?;
    fs::write(out.join("labels.csv"), buf)?;

    let models_dir = out.join("models");
    let logs_dir = out.join("logs");
    let preds_dir = out.join("predictions");
    ensure_dir(&models_dir)?;
    ensure_dir(&logs_dir)?;
    ensure_dir(&preds_dir)?;

    let train_args = TrainArgs {
        config: None,
        model: None,
        traces: None,
        truth: None,
        split_day: None,
        seed: None,
        out: None,
        window: None,
        hidden: None,
        layers: None,
        epochs: None,
        batch_size: None,
        max_train_pairs: None,
        trees: None,
        rounds: None,
        learning_rate: None,
        use_throughput: false,
    };
    let knobs = knobs_from(&train_args, &cfg)?;

    let mut all_sets = Vec::new();
    for &kind in &models {
        let model = if kind == ModelKind::Llm {
            None
        } else {
            let trained = train_model(kind, &traces, Some(&truth), split_day, run_seed, &knobs)?;
            let file = fs::File::create(models_dir.join(format!("{}.json", kind.name())))?;
            save_model(&trained.model, file)?;
            write_training_log(
                &logs_dir.join(format!("{}_training.csv", kind.name())),
                &trained.log,
            )?;
            Some(trained.model)
        };
        let preds = detect_model(
            kind,
            model.as_ref(),
            &traces,
            split_day,
            run_seed,
            k,
            workers,
            forecast_stride,
        )?;
        let mut buf = Vec::new();
        fcsv::write_predictions_csv(&preds.to_rows(), &mut buf)?;
        fs::write(preds_dir.join(format!("{}.csv", kind.name())), buf)?;
        all_sets.push(preds);
        println!("pipeline: {} done", kind.name());
    }

    let bench_dir = out.join("bench");
    run_bench(
        &bench_dir,
        &all_sets,
        &truth,
        eval_date,
        &DEFAULT_LOOKBACKS,
        &default_thresholds(),
        Aggregation::Max,
        cfg.get::<f64>("rate_threshold")?.unwrap_or(0.5),
    )?;
    let summary = build_report(&bench_dir)?;
    fs::write(bench_dir.join("summary.csv"), &summary)?;

    let mut rc = ResolvedConfig::new("pipeline");
    record_spec(&mut rc, &spec, run_seed);
    rc.set("split_day", split_day);
    rc.set("eval_date", eval_date);
    rc.set("models", &models_text);
    rc.set("k", k);
    rc.write(&out)?;
    print!("{summary}");
    println!("pipeline complete -> {}", out.display());
    Ok(())
}
