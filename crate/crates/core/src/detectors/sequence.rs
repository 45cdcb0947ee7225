//! Sliding-window sequence datasets for the forecasting detectors.
//!
//! Daily windows are concatenated per disk in date order; every position
//! with `W` samples of history becomes an (input window, next-step
//! target) pair. Pairs are assigned to train or test by the date of the
//! target sample, so early test-day predictions still see trailing
//! training context. The min-max scaler is fitted on training-range
//! values only; test values may legitimately scale outside `[0,1]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{DailyWindow, Date, DiskId};

/// Which telemetry channels feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeqFeatures {
    LatencyOnly,
    LatencyThroughput,
}

impl SeqFeatures {
    pub fn count(self) -> usize {
        match self {
            SeqFeatures::LatencyOnly => 1,
            SeqFeatures::LatencyThroughput => 2,
        }
    }
}

/// Per-feature min-max scaling to `[0,1]`; degenerate (constant)
/// features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, n_features: usize) -> MinMaxScaler {
        let mut mins = vec![f64::INFINITY; n_features];
        let mut maxs = vec![f64::NEG_INFINITY; n_features];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        MinMaxScaler { mins, maxs }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let span = self.maxs[j] - self.mins[j];
                if span > 0.0 {
                    (v - self.mins[j]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// One disk's scaled series and its pair index sets.
#[derive(Debug, Clone)]
pub struct DiskSeries {
    /// Per-sample target date.
    dates: Vec<Date>,
    /// Scaled values, sample-major (len x n_features).
    values: Vec<f64>,
    n_features: usize,
    /// Indices i such that `(values[i-W..i], values[i])` is a training pair.
    pub train_pairs: Vec<usize>,
    /// Likewise for test pairs (target date after the split day).
    pub test_pairs: Vec<usize>,
}

impl DiskSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    fn feature_row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// The assembled dataset: one series per admitted disk.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    pub window_len: usize,
    pub features: SeqFeatures,
    pub scaler: MinMaxScaler,
    pub disks: BTreeMap<DiskId, DiskSeries>,
    /// Disks dropped for having fewer than W+1 training samples.
    pub excluded: Vec<DiskId>,
}

impl SequenceDataset {
    /// Input window ending just before target index `i`, as (W, F).
    pub fn input_tensor(&self, disk: &DiskId, i: usize) -> Result<Tensor> {
        let series = self.series(disk)?;
        let f = series.n_features;
        let data = series.values[(i - self.window_len) * f..i * f].to_vec();
        Tensor::from_vec(self.window_len, f, data)
    }

    /// Scaled target row at index `i`.
    pub fn target(&self, disk: &DiskId, i: usize) -> Result<&[f64]> {
        Ok(self.series(disk)?.feature_row(i))
    }

    pub fn target_date(&self, disk: &DiskId, i: usize) -> Result<Date> {
        Ok(self.series(disk)?.dates[i])
    }

    pub fn series(&self, disk: &DiskId) -> Result<&DiskSeries> {
        self.disks
            .get(disk)
            .ok_or_else(|| Error::UnknownDisk(disk.to_string()))
    }

    /// All (disk, target index) training pairs, disk order.
    pub fn train_refs(&self) -> Vec<(DiskId, usize)> {
        self.disks
            .iter()
            .flat_map(|(id, s)| s.train_pairs.iter().map(move |&i| (id.clone(), i)))
            .collect()
    }

    /// Timestep-major batch: W tensors of (B, F) plus targets (B, F).
    pub fn batch(&self, refs: &[(DiskId, usize)]) -> Result<(Vec<Tensor>, Tensor)> {
        let b = refs.len();
        let f = self.features.count();
        let w = self.window_len;
        let mut steps = vec![Tensor::zeros(b, f); w];
        let mut targets = Tensor::zeros(b, f);
        for (row, (disk, i)) in refs.iter().enumerate() {
            let series = self.series(disk)?;
            for (t, step) in steps.iter_mut().enumerate() {
                let src = series.feature_row(i - w + t);
                for (c, &v) in src.iter().enumerate() {
                    step.set(row, c, v);
                }
            }
            for (c, &v) in series.feature_row(*i).iter().enumerate() {
                targets.set(row, c, v);
            }
        }
        Ok((steps, targets))
    }
}

fn raw_features(w: &DailyWindow, features: SeqFeatures) -> Vec<(Date, Vec<f64>)> {
    w.samples()
        .iter()
        .map(|s| {
            let row = match features {
                SeqFeatures::LatencyOnly => vec![s.latency_ms],
                SeqFeatures::LatencyThroughput => vec![s.latency_ms, s.throughput_mbps],
            };
            (w.date, row)
        })
        .collect()
}

/// Builds the sliding-window dataset from a fleet's daily windows.
///
/// Pairs are split train/test by the target's date versus `split_day`.
/// Disks contributing fewer than W+1 training samples are excluded and
/// listed in the result.
pub fn build_sequences(
    windows: &[DailyWindow],
    split_day: Date,
    window_len: usize,
    features: SeqFeatures,
) -> Result<SequenceDataset> {
    if window_len < 1 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    if windows.is_empty() {
        return Err(Error::EmptyInput("no daily windows"));
    }

    let mut per_disk: BTreeMap<DiskId, Vec<&DailyWindow>> = BTreeMap::new();
    for w in windows {
        per_disk.entry(w.id.clone()).or_default().push(w);
    }

    // Scaler sees only training-range raw values.
    let n_features = features.count();
    let mut train_rows: Vec<Vec<f64>> = Vec::new();
    for group in per_disk.values() {
        for w in group.iter().filter(|w| w.date <= split_day) {
            train_rows.extend(raw_features(w, features).into_iter().map(|(_, r)| r));
        }
    }
    if train_rows.is_empty() {
        return Err(Error::EmptyInput("no training samples before the split day"));
    }
    let scaler = MinMaxScaler::fit(train_rows.iter().map(|r| r.as_slice()), n_features);

    let mut disks = BTreeMap::new();
    let mut excluded = Vec::new();
    for (id, mut group) in per_disk {
        group.sort_by_key(|w| w.date);
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for w in &group {
            for (date, row) in raw_features(w, features) {
                dates.push(date);
                values.extend(scaler.transform(&row));
            }
        }
        let n_train_samples = dates.iter().filter(|&&d| d <= split_day).count();
        if n_train_samples < window_len + 1 {
            excluded.push(id);
            continue;
        }
        let mut train_pairs = Vec::new();
        let mut test_pairs = Vec::new();
        for (i, date) in dates.iter().enumerate().skip(window_len) {
            if *date <= split_day {
                train_pairs.push(i);
            } else {
                test_pairs.push(i);
            }
        }
        disks.insert(
            id,
            DiskSeries {
                dates,
                values,
                n_features,
                train_pairs,
                test_pairs,
            },
        );
    }
    if disks.is_empty() {
        return Err(Error::EmptyInput("every disk was excluded"));
    }
    Ok(SequenceDataset {
        window_len,
        features,
        scaler,
        disks,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DailyWindow, Sample, DAY_SECONDS};

    fn disk(n: u8) -> DiskId {
        DiskId::new('A', "h000", n).unwrap()
    }

    fn window(day: i64, lats: &[f64]) -> DailyWindow {
        let samples: Vec<Sample> = lats
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                Sample::new(day * DAY_SECONDS + 21 * 3600 + i as i64 * 15, l, 100.0).unwrap()
            })
            .collect();
        DailyWindow::new(disk(0), Date::from_days(day), samples).unwrap()
    }

    // Enumeration example: series [1,2,3,4], W=2 -> ([1,2]->3, [2,3]->4).
    #[test]
    fn sliding_pairs_enumerate() {
        let ws = vec![window(1, &[1.0, 2.0, 3.0, 4.0])];
        let ds = build_sequences(&ws, Date::from_days(1), 2, SeqFeatures::LatencyOnly).unwrap();
        let series = ds.series(&disk(0)).unwrap();
        assert_eq!(series.train_pairs, vec![2, 3]);
        assert!(series.test_pairs.is_empty());

        // Scaled space: min 1, max 4 -> [0, 1/3, 2/3, 1].
        let input = ds.input_tensor(&disk(0), 2).unwrap();
        assert!((input.get(0, 0) - 0.0).abs() < 1e-12);
        assert!((input.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        let target = ds.target(&disk(0), 2).unwrap();
        assert!((target[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_scales_to_zero() {
        let ws = vec![window(1, &[5.0, 5.0, 5.0])];
        let ds = build_sequences(&ws, Date::from_days(1), 1, SeqFeatures::LatencyOnly).unwrap();
        let series = ds.series(&disk(0)).unwrap();
        for i in 0..series.len() {
            assert_eq!(series.feature_row(i), &[0.0]);
        }
    }

    // Leak-freedom: train max < test max, so scaled test values exceed 1.
    #[test]
    fn scaler_fitted_on_train_only() {
        let ws = vec![window(1, &[1.0, 2.0, 3.0]), window(2, &[6.0, 6.0, 6.0])];
        let ds = build_sequences(&ws, Date::from_days(1), 1, SeqFeatures::LatencyOnly).unwrap();
        let series = ds.series(&disk(0)).unwrap();
        let test_idx = series.test_pairs[0];
        let scaled_test = ds.target(&disk(0), test_idx).unwrap()[0];
        assert!(scaled_test > 1.0, "scaled test value {scaled_test}");

        // Refitting on train+test changes scaled test values.
        let leaky = MinMaxScaler::fit(
            [[1.0].as_slice(), &[2.0], &[3.0], &[6.0]].into_iter(),
            1,
        );
        assert!((leaky.transform(&[6.0])[0] - 1.0).abs() < 1e-12);
        assert_ne!(leaky.transform(&[6.0])[0], scaled_test);
    }

    #[test]
    fn short_disks_are_excluded_and_reported() {
        let mut ws = vec![window(1, &[1.0, 2.0, 3.0, 4.0, 5.0])];
        let short_samples = vec![Sample::new(DAY_SECONDS + 21 * 3600, 1.0, 1.0).unwrap()];
        ws.push(DailyWindow::new(disk(1), Date::from_days(1), short_samples).unwrap());
        let ds = build_sequences(&ws, Date::from_days(1), 3, SeqFeatures::LatencyOnly).unwrap();
        assert!(ds.disks.contains_key(&disk(0)));
        assert_eq!(ds.excluded, vec![disk(1)]);
    }

    #[test]
    fn zero_window_is_config_error() {
        let ws = vec![window(1, &[1.0])];
        assert!(matches!(
            build_sequences(&ws, Date::from_days(1), 0, SeqFeatures::LatencyOnly),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn batch_is_timestep_major() {
        let ws = vec![window(1, &[1.0, 2.0, 3.0, 4.0])];
        let ds = build_sequences(&ws, Date::from_days(1), 2, SeqFeatures::LatencyOnly).unwrap();
        let refs = vec![(disk(0), 2), (disk(0), 3)];
        let (steps, targets) = ds.batch(&refs).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].shape(), (2, 1));
        // Row 0 window [1,2] scaled, row 1 window [2,3] scaled.
        assert!((steps[0].get(0, 0) - 0.0).abs() < 1e-12);
        assert!((steps[0].get(1, 0) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(targets.shape(), (2, 1));
    }

    #[test]
    fn two_feature_rows() {
        let ws = vec![window(1, &[1.0, 2.0, 3.0])];
        let ds =
            build_sequences(&ws, Date::from_days(1), 1, SeqFeatures::LatencyThroughput).unwrap();
        let series = ds.series(&disk(0)).unwrap();
        assert_eq!(series.n_features, 2);
        // Throughput is constant 100 -> degenerate feature scales to 0.
        assert_eq!(series.feature_row(0)[1], 0.0);
    }
}
