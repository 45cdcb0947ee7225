//! Per-family training and daily detection, shared by the train,
//! detect, and pipeline commands.

use std::collections::{BTreeMap, BTreeSet};

use clap::ValueEnum;

use failslow_core::autodiff::OptimizerConfig;
use failslow_core::bench::PredictionSet;
use failslow_core::detectors::{
    classify_by_mse, forecast_mse_by_day, iforest_score, predict_forest, train_autoencoder,
    train_gbdt_ranker, train_isolation_forest, train_lstm, train_patchtst, train_random_forest,
    train_svm, AeConfig, DetectorModel, ForecastModel, ForestParams, GbdtParams, IForestParams,
    LstmConfig, PatchConfig, SeqFeatures, SvmConfig,
};
use failslow_core::detectors::sequence::{build_sequences, SequenceDataset};
use failslow_core::labeling::{csr_labels, label_fleet, snapshot_from_samples};
use failslow_core::llm::{detect_with_llm, LlmConfig, MockTransport};
use failslow_core::model::{DailyWindow, Date, DiskId, DiskTrace, FaultLabel, Verdict};
use failslow_core::rng::derive_seed;
use failslow_core::{Error, Result};

/// Detector families the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Csr,
    Multipred,
    Lstm,
    Patchtst,
    Autoencoder,
    Iforest,
    Svm,
    Llm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Csr => "csr",
            ModelKind::Multipred => "multipred",
            ModelKind::Lstm => "lstm",
            ModelKind::Patchtst => "patchtst",
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Iforest => "iforest",
            ModelKind::Svm => "svm",
            ModelKind::Llm => "llm",
        }
    }

    pub fn needs_truth_for_training(&self) -> bool {
        matches!(self, ModelKind::Csr | ModelKind::Multipred | ModelKind::Svm)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        <ModelKind as ValueEnum>::from_str(s, true)
            .map_err(|_| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// Curated hyperparameters surfaced on the command line; None fields
/// fall back to each family's defaults.
#[derive(Debug, Clone, Default)]
pub struct TrainKnobs {
    pub window: Option<usize>,
    pub hidden: Option<usize>,
    pub layers: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub max_train_pairs: Option<usize>,
    pub trees: Option<usize>,
    pub rounds: Option<usize>,
    pub learning_rate: Option<f64>,
    pub use_throughput: bool,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: DetectorModel,
    /// (epoch, train loss, validation loss) rows for the training log.
    pub log: Vec<(usize, f64, Option<f64>)>,
}

fn split_windows_by_day(
    traces: &[DiskTrace],
    split_day: Date,
) -> Result<(Vec<DailyWindow>, Vec<DailyWindow>)> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut first = None;
    let mut last = None;
    for trace in traces {
        for w in failslow_core::model::window_split(trace)? {
            first = Some(first.map_or(w.date, |f: Date| f.min(w.date)));
            last = Some(last.map_or(w.date, |l: Date| l.max(w.date)));
            if w.date <= split_day {
                train.push(w);
            } else {
                test.push(w);
            }
        }
    }
    match (first, last) {
        (Some(f), Some(l)) if split_day >= f && split_day <= l => Ok((train, test)),
        (Some(f), Some(l)) => Err(Error::InvalidSplit {
            split_day: split_day.to_string(),
            first: f.to_string(),
            last: l.to_string(),
        }),
        _ => Err(Error::EmptyInput("no daily windows in the traces")),
    }
}

/// Per disk-day snapshot feature rows.
fn daily_feature_rows(windows: &[DailyWindow]) -> Result<Vec<(DiskId, Date, Vec<f64>)>> {
    windows
        .iter()
        .map(|w| {
            failslow_core::labeling::extract_snapshot_features(w)
                .map(|f| (w.id.clone(), w.date, f.to_vec()))
        })
        .collect()
}

fn truth_verdict_map(truth: &[FaultLabel]) -> BTreeMap<(DiskId, Date), Verdict> {
    truth
        .iter()
        .map(|l| ((l.id.clone(), l.date), l.verdict))
        .collect()
}

fn seq_features(knobs: &TrainKnobs) -> SeqFeatures {
    if knobs.use_throughput {
        SeqFeatures::LatencyThroughput
    } else {
        SeqFeatures::LatencyOnly
    }
}

fn lstm_config(knobs: &TrainKnobs, seed: u64) -> LstmConfig {
    let default = LstmConfig::default();
    LstmConfig {
        n_layers: knobs.layers.unwrap_or(default.n_layers),
        hidden: knobs.hidden.unwrap_or(default.hidden),
        input_features: seq_features(knobs).count(),
        window: knobs.window.unwrap_or(default.window),
        optimizer: OptimizerConfig {
            learning_rate: knobs.learning_rate.unwrap_or(1e-3),
            ..OptimizerConfig::rmsprop()
        },
        epochs: knobs.epochs.unwrap_or(default.epochs),
        batch_size: knobs.batch_size.unwrap_or(default.batch_size),
        max_train_pairs: knobs.max_train_pairs.or(default.max_train_pairs),
        validation_fraction: default.validation_fraction,
        seed: derive_seed(seed, "train/lstm"),
    }
}

fn patch_config(knobs: &TrainKnobs, seed: u64) -> PatchConfig {
    let default = PatchConfig::default();
    PatchConfig {
        hidden: knobs.hidden.unwrap_or(default.hidden),
        n_layers: knobs.layers.unwrap_or(default.n_layers),
        input_features: seq_features(knobs).count(),
        window: knobs.window.unwrap_or(default.window),
        optimizer: OptimizerConfig {
            learning_rate: knobs.learning_rate.unwrap_or(1e-3),
            ..OptimizerConfig::adam()
        },
        epochs: knobs.epochs.unwrap_or(default.epochs),
        batch_size: knobs.batch_size.unwrap_or(default.batch_size),
        max_train_pairs: knobs.max_train_pairs.or(default.max_train_pairs),
        seed: derive_seed(seed, "train/patchtst"),
        ..default
    }
}

/// Trains one detector family on the training segment.
pub fn train_model(
    kind: ModelKind,
    traces: &[DiskTrace],
    truth: Option<&[FaultLabel]>,
    split_day: Date,
    seed: u64,
    knobs: &TrainKnobs,
) -> Result<TrainOutput> {
    if kind.needs_truth_for_training() && truth.is_none() {
        return Err(Error::Config(format!(
            "model {} trains supervised; provide --truth",
            kind.name()
        )));
    }
    let (train_windows, _) = split_windows_by_day(traces, split_day)?;
    if train_windows.is_empty() {
        return Err(Error::EmptyInput("no training windows before the split day"));
    }

    match kind {
        ModelKind::Csr => {
            let truth = truth.expect("checked above");
            let train_start = train_windows.iter().map(|w| w.date).min().expect("non-empty");
            let csr = csr_labels(truth, (train_start, split_day));
            // One aggregated snapshot row per disk over its whole
            // training segment.
            let mut per_disk: BTreeMap<DiskId, Vec<failslow_core::model::Sample>> =
                BTreeMap::new();
            for w in &train_windows {
                per_disk
                    .entry(w.id.clone())
                    .or_default()
                    .extend(w.samples().iter().copied());
            }
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for (id, samples) in &per_disk {
                rows.push(snapshot_from_samples(samples)?.to_vec());
                let y = csr
                    .get(id)
                    .map(|l| (l.days_to_first_error > 0) as u8 as f64)
                    .unwrap_or(0.0);
                ys.push(y);
            }
            let params = GbdtParams {
                n_rounds: knobs.rounds.unwrap_or(50),
                learning_rate: knobs.learning_rate.unwrap_or(0.3),
                max_depth: 3,
                seed: derive_seed(seed, "train/csr"),
            };
            let model = train_gbdt_ranker(&rows, &ys, &params)?;
            let log = model
                .train_loss
                .iter()
                .enumerate()
                .map(|(i, &l)| (i, l, None))
                .collect();
            Ok(TrainOutput {
                model: DetectorModel::Forest(model),
                log,
            })
        }
        ModelKind::Multipred => {
            let verdicts = truth_verdict_map(truth.expect("checked above"));
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for (id, date, row) in daily_feature_rows(&train_windows)? {
                let Some(v) = verdicts.get(&(id.clone(), date)) else {
                    return Err(Error::Invariant(format!(
                        "truth missing label for {id} {date}"
                    )));
                };
                rows.push(row);
                ys.push((*v == Verdict::T) as u8 as f64);
            }
            let params = ForestParams {
                n_trees: knobs.trees.unwrap_or(100),
                seed: derive_seed(seed, "train/multipred"),
                ..Default::default()
            };
            let model = train_random_forest(&rows, &ys, &params)?;
            Ok(TrainOutput {
                model: DetectorModel::Forest(model),
                log: Vec::new(),
            })
        }
        ModelKind::Svm => {
            let verdicts = truth_verdict_map(truth.expect("checked above"));
            let mut rows = Vec::new();
            let mut ys = Vec::new();
            for (id, date, row) in daily_feature_rows(&train_windows)? {
                let Some(v) = verdicts.get(&(id.clone(), date)) else {
                    return Err(Error::Invariant(format!(
                        "truth missing label for {id} {date}"
                    )));
                };
                rows.push(row);
                ys.push(if *v == Verdict::T { 1.0 } else { -1.0 });
            }
            let config = SvmConfig {
                epochs: knobs.epochs.unwrap_or(200),
                seed: derive_seed(seed, "train/svm"),
                ..Default::default()
            };
            let model = train_svm(&rows, &ys, &config)?;
            Ok(TrainOutput {
                model: DetectorModel::Svm(model),
                log: Vec::new(),
            })
        }
        ModelKind::Iforest => {
            let rows: Vec<Vec<f64>> = daily_feature_rows(&train_windows)?
                .into_iter()
                .map(|(_, _, r)| r)
                .collect();
            let params = IForestParams {
                n_trees: knobs.trees.unwrap_or(100),
                subsample: 256,
                seed: derive_seed(seed, "train/iforest"),
            };
            let model = train_isolation_forest(&rows, &params)?;
            Ok(TrainOutput {
                model: DetectorModel::IsolationForest(model),
                log: Vec::new(),
            })
        }
        ModelKind::Autoencoder => {
            let rows: Vec<Vec<f64>> = daily_feature_rows(&train_windows)?
                .into_iter()
                .map(|(_, _, r)| r)
                .collect();
            let config = AeConfig {
                epochs: knobs.epochs.unwrap_or(200),
                batch_size: knobs.batch_size.unwrap_or(64),
                seed: derive_seed(seed, "train/autoencoder"),
                ..AeConfig::for_input_dim(8)
            };
            let model = train_autoencoder(&rows, &config)?;
            let log = model
                .loss_curve
                .iter()
                .enumerate()
                .map(|(i, &l)| (i, l, None))
                .collect();
            Ok(TrainOutput {
                model: DetectorModel::Autoencoder(model),
                log,
            })
        }
        ModelKind::Lstm => {
            let all_windows = all_windows(traces)?;
            let config = lstm_config(knobs, seed);
            let dataset =
                build_sequences(&all_windows, split_day, config.window, seq_features(knobs))?;
            let model = train_lstm(&dataset, &config)?;
            let log = model
                .loss_curve
                .iter()
                .enumerate()
                .map(|(i, &(t, v))| (i, t, Some(v)))
                .collect();
            Ok(TrainOutput {
                model: DetectorModel::Lstm(model),
                log,
            })
        }
        ModelKind::Patchtst => {
            let all_windows = all_windows(traces)?;
            let config = patch_config(knobs, seed);
            let dataset =
                build_sequences(&all_windows, split_day, config.window, seq_features(knobs))?;
            let model = train_patchtst(&dataset, &config)?;
            let log = model
                .loss_curve
                .iter()
                .enumerate()
                .map(|(i, &(t, v))| (i, t, Some(v)))
                .collect();
            Ok(TrainOutput {
                model: DetectorModel::PatchTst(model),
                log,
            })
        }
        ModelKind::Llm => Err(Error::Config(
            "the llm detector is training-free; run detect directly".into(),
        )),
    }
}

fn all_windows(traces: &[DiskTrace]) -> Result<Vec<DailyWindow>> {
    let mut windows = Vec::new();
    for t in traces {
        windows.extend(failslow_core::model::window_split(t)?);
    }
    Ok(windows)
}

/// Daily fault scores for the test segment (dates after the split day).
///
/// `forecast_stride` thins the sliding test windows the forecasters
/// score per day (1 scores every window); it only trades MSE-estimate
/// resolution for runtime.
#[allow(clippy::too_many_arguments)]
pub fn detect_model(
    kind: ModelKind,
    model: Option<&DetectorModel>,
    traces: &[DiskTrace],
    split_day: Date,
    seed: u64,
    sigma_k: f64,
    workers: usize,
    forecast_stride: usize,
) -> Result<PredictionSet> {
    let (_, test_windows) = split_windows_by_day(traces, split_day)?;
    if test_windows.is_empty() {
        return Err(Error::EmptyInput("no test windows after the split day"));
    }
    let mut preds = PredictionSet::new(kind.name());

    match (kind, model) {
        (ModelKind::Csr, Some(DetectorModel::Forest(m)))
        | (ModelKind::Multipred, Some(DetectorModel::Forest(m))) => {
            let expected = match kind {
                ModelKind::Csr => failslow_core::detectors::ForestKind::Gbdt,
                _ => failslow_core::detectors::ForestKind::RandomForest,
            };
            if m.kind != expected {
                return Err(Error::Config(format!(
                    "model file holds a {:?} forest but --model is {}",
                    m.kind,
                    kind.name()
                )));
            }
            for (id, date, row) in daily_feature_rows(&test_windows)? {
                preds.insert(id, date, predict_forest(m, &row)?)?;
            }
        }
        (ModelKind::Svm, Some(DetectorModel::Svm(m))) => {
            for (id, date, row) in daily_feature_rows(&test_windows)? {
                preds.insert(id, date, m.score(&row)?)?;
            }
        }
        (ModelKind::Iforest, Some(DetectorModel::IsolationForest(m))) => {
            for (id, date, row) in daily_feature_rows(&test_windows)? {
                preds.insert(id, date, iforest_score(m, &row)?)?;
            }
        }
        (ModelKind::Autoencoder, Some(DetectorModel::Autoencoder(m))) => {
            // Reconstruction error per disk-day, then per-day fleet
            // 3-sigma classification within each cluster.
            let mut errors: BTreeMap<(char, Date), BTreeMap<DiskId, f64>> = BTreeMap::new();
            for (id, date, row) in daily_feature_rows(&test_windows)? {
                let err = m.reconstruction_error(&row)?;
                errors.entry((id.cluster, date)).or_default().insert(id, err);
            }
            for ((_, date), fleet) in errors {
                for label in classify_by_mse(&fleet, sigma_k, date)? {
                    preds.insert(label.id, label.date, label.score)?;
                }
            }
        }
        (ModelKind::Lstm, Some(DetectorModel::Lstm(m))) => {
            let mut dataset = build_sequences(
                &all_windows(traces)?,
                split_day,
                m.config.window,
                if m.config.input_features == 2 {
                    SeqFeatures::LatencyThroughput
                } else {
                    SeqFeatures::LatencyOnly
                },
            )?;
            thin_test_pairs(&mut dataset, forecast_stride);
            score_forecaster(&mut preds, m, &dataset, sigma_k, workers)?;
        }
        (ModelKind::Patchtst, Some(DetectorModel::PatchTst(m))) => {
            let mut dataset = build_sequences(
                &all_windows(traces)?,
                split_day,
                m.config.window,
                if m.config.input_features == 2 {
                    SeqFeatures::LatencyThroughput
                } else {
                    SeqFeatures::LatencyOnly
                },
            )?;
            thin_test_pairs(&mut dataset, forecast_stride);
            score_forecaster(&mut preds, m, &dataset, sigma_k, workers)?;
        }
        (ModelKind::Llm, _) => {
            // The mock transport answers from the statistical labeler's
            // verdicts, keeping the protocol path deterministic offline.
            let dates: BTreeSet<Date> = test_windows.iter().map(|w| w.date).collect();
            let config = LlmConfig {
                seed: derive_seed(seed, "detect/llm"),
                ..Default::default()
            };
            for date in dates {
                let day_windows: Vec<DailyWindow> = test_windows
                    .iter()
                    .filter(|w| w.date == date)
                    .cloned()
                    .collect();
                let plan: BTreeMap<DiskId, Verdict> = label_fleet(&day_windows, sigma_k)?
                    .into_iter()
                    .map(|l| (l.id, l.verdict))
                    .collect();
                let transport = MockTransport::new(plan);
                let out = detect_with_llm(&day_windows, date, &config, &transport)?;
                for label in out.labels {
                    preds.insert(label.id, label.date, label.score)?;
                }
            }
        }
        (kind, Some(other)) => {
            return Err(Error::Config(format!(
                "model file holds a {} model but --model is {}",
                other.family(),
                kind.name()
            )));
        }
        (kind, None) => {
            return Err(Error::Config(format!(
                "model {} requires --model-file",
                kind.name()
            )));
        }
    }
    Ok(preds)
}

fn thin_test_pairs(dataset: &mut SequenceDataset, stride: usize) {
    if stride <= 1 {
        return;
    }
    for series in dataset.disks.values_mut() {
        series.test_pairs = series.test_pairs.iter().copied().step_by(stride).collect();
    }
}

/// Per-day fleet MSE classification for a forecaster, disks scored in
/// parallel.
fn score_forecaster<M: ForecastModel + Sync>(
    preds: &mut PredictionSet,
    model: &M,
    dataset: &SequenceDataset,
    sigma_k: f64,
    workers: usize,
) -> Result<()> {
    let disks: Vec<DiskId> = dataset.disks.keys().cloned().collect();
    let per_disk: Vec<Result<BTreeMap<Date, f64>>> = par_map(&disks, workers, |disk| {
        forecast_mse_by_day(model, dataset, disk)
    });
    let mut daily: BTreeMap<(char, Date), BTreeMap<DiskId, f64>> = BTreeMap::new();
    for (disk, result) in disks.iter().zip(per_disk) {
        for (date, mse) in result? {
            daily
                .entry((disk.cluster, date))
                .or_default()
                .insert(disk.clone(), mse);
        }
    }
    for ((_, date), fleet) in daily {
        for label in classify_by_mse(&fleet, sigma_k, date)? {
            preds.insert(label.id, label.date, label.score)?;
        }
    }
    Ok(())
}

/// Order-preserving parallel map over a worker pool.
pub fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let mut out: Vec<Option<R>> = std::iter::repeat_with(|| None).take(items.len()).collect();
    std::thread::scope(|scope| {
        for (chunk_items, chunk_out) in items.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (item, slot) in chunk_items.iter().zip(chunk_out.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("every slot filled")).collect()
}
