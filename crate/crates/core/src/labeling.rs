//! Statistical ground-truth labeling and snapshot feature extraction.
//!
//! The labeler flags a disk's daily window when its mean latency exceeds
//! the mean + k·std threshold computed over its host peers' mean latencies
//! for the same day (k defaults to 3). Standard deviations here are
//! population standard deviations: the peer set is the whole population
//! of interest, and the test oracles assume it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CsrLabel, DailyWindow, Date, DiskId, FaultLabel, SnapshotFeatures, Verdict};

/// Default sigma multiplier.
pub const DEFAULT_K: f64 = 3.0;

/// A mean + k·std threshold over a reference population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaThreshold {
    pub mean: f64,
    pub std: f64,
    pub k: f64,
    pub threshold: f64,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Threshold = mean + k·std over `values` (population std).
pub fn compute_sigma_threshold(values: &[f64], k: f64) -> Result<SigmaThreshold> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sigma threshold over no values"));
    }
    let (mean, std) = mean_std(values);
    Ok(SigmaThreshold {
        mean,
        std,
        k,
        threshold: mean + k * std,
    })
}

/// Labels one window against its host peers for the same date.
///
/// Verdict is `T` iff the window's mean latency strictly exceeds the
/// sigma threshold over the peers' mean latencies. The peer set is all
/// disks of the same host for that date, target included.
pub fn label_window(window: &DailyWindow, peers: &[DailyWindow], k: f64) -> Result<FaultLabel> {
    if peers.is_empty() {
        return Err(Error::InsufficientPeers("no peer windows for labeling"));
    }
    let peer_means: Vec<f64> = peers.iter().map(|w| w.mean_latency()).collect();
    let sigma = compute_sigma_threshold(&peer_means, k)?;
    let faulty = window.mean_latency() > sigma.threshold;
    Ok(FaultLabel::ground_truth(window.id.clone(), window.date, faulty))
}

/// Labels every window of a fleet, peer-grouped by (host, date).
///
/// Windows whose (host, date) group is a singleton still label against
/// themselves (never `T`: a value cannot exceed its own mean + k·std for
/// k >= 0 unless std > 0).
pub fn label_fleet(windows: &[DailyWindow], k: f64) -> Result<Vec<FaultLabel>> {
    let mut groups: BTreeMap<(char, &str, Date), Vec<&DailyWindow>> = BTreeMap::new();
    for w in windows {
        groups
            .entry((w.id.cluster, w.id.host.as_str(), w.date))
            .or_default()
            .push(w);
    }
    let mut labels = Vec::with_capacity(windows.len());
    for group in groups.values() {
        let peers: Vec<DailyWindow> = group.iter().map(|w| (*w).clone()).collect();
        for w in group {
            labels.push(label_window(w, &peers, k)?);
        }
    }
    Ok(labels)
}

/// The eight summary statistics of one window.
pub fn extract_snapshot_features(window: &DailyWindow) -> Result<SnapshotFeatures> {
    snapshot_from_samples(window.samples())
}

/// Snapshot statistics over any sample slice (e.g. a whole training
/// segment rather than one day).
pub fn snapshot_from_samples(samples: &[crate::model::Sample]) -> Result<SnapshotFeatures> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("snapshot features of an empty window"));
    }
    let lats: Vec<f64> = samples.iter().map(|s| s.latency_ms).collect();
    let tps: Vec<f64> = samples.iter().map(|s| s.throughput_mbps).collect();
    let (mean_lat, std_lat) = mean_std(&lats);
    let (mean_tp, std_tp) = mean_std(&tps);
    let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |xs: &[f64]| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SnapshotFeatures {
        mean_lat,
        min_lat: min(&lats),
        max_lat: max(&lats),
        std_lat,
        mean_tp,
        min_tp: min(&tps),
        max_tp: max(&tps),
        std_tp,
    })
}

/// Days to the first `T` label per disk, 1-based from the start of the
/// training range; 0 for disks with no fault.
///
/// `train_range` is the inclusive (first, last) day of the training
/// segment; labels outside it are ignored.
pub fn csr_labels(
    truth: &[FaultLabel],
    train_range: (Date, Date),
) -> BTreeMap<DiskId, CsrLabel> {
    let (start, end) = train_range;
    let mut first_error: BTreeMap<DiskId, Date> = BTreeMap::new();
    let mut seen: BTreeMap<DiskId, ()> = BTreeMap::new();
    for label in truth {
        if label.date < start || label.date > end {
            continue;
        }
        seen.entry(label.id.clone()).or_insert(());
        if label.verdict == Verdict::T {
            first_error
                .entry(label.id.clone())
                .and_modify(|d| {
                    if label.date < *d {
                        *d = label.date;
                    }
                })
                .or_insert(label.date);
        }
    }
    seen.keys()
        .map(|id| {
            let days = first_error
                .get(id)
                .map(|d| (d.days() - start.days() + 1) as u32)
                .unwrap_or(0);
            (id.clone(), CsrLabel { days_to_first_error: days })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DiskId, Sample, DAY_SECONDS};
    use proptest::prelude::*;

    fn disk(n: u8) -> DiskId {
        DiskId::new('A', "h000", n).unwrap()
    }

    fn window(disk_n: u8, day: i64, lats: &[f64]) -> DailyWindow {
        let samples: Vec<Sample> = lats
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                Sample::new(day * DAY_SECONDS + 21 * 3600 + i as i64 * 15, l, 100.0).unwrap()
            })
            .collect();
        DailyWindow::new(disk(disk_n), Date::from_days(day), samples).unwrap()
    }

    #[test]
    fn sigma_constant_series() {
        let t = compute_sigma_threshold(&[1.0, 1.0, 1.0, 1.0], 3.0).unwrap();
        assert_eq!(t.std, 0.0);
        assert_eq!(t.threshold, 1.0);
    }

    // Direct arithmetic oracle: mean 5, population std 2, threshold 11.
    #[test]
    fn sigma_textbook_example() {
        let t = compute_sigma_threshold(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0], 3.0).unwrap();
        assert!((t.mean - 5.0).abs() < 1e-12);
        assert!((t.std - 2.0).abs() < 1e-12);
        assert!((t.threshold - 11.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_k_zero_is_mean() {
        let t = compute_sigma_threshold(&[3.0, 7.0, 2.0], 0.0).unwrap();
        assert_eq!(t.threshold, t.mean);
    }

    #[test]
    fn sigma_empty_errors() {
        assert!(matches!(
            compute_sigma_threshold(&[], 3.0),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn identical_windows_all_f() {
        let peers: Vec<DailyWindow> = (0..12).map(|n| window(n, 1, &[1.0, 1.0, 1.0])).collect();
        for w in &peers {
            let label = label_window(w, &peers, 3.0).unwrap();
            assert_eq!(label.verdict, Verdict::F);
            assert_eq!(label.score, 0.0);
        }
    }

    #[test]
    fn dominant_outlier_is_t() {
        let mut peers: Vec<DailyWindow> = (0..11).map(|n| window(n, 1, &[1.0, 1.0])).collect();
        let target = window(11, 1, &[10.0, 10.0]);
        peers.push(target.clone());
        let label = label_window(&target, &peers, 3.0).unwrap();
        assert_eq!(label.verdict, Verdict::T);
        assert_eq!(label.score, 1.0);
    }

    #[test]
    fn label_without_peers_errors() {
        let w = window(0, 1, &[1.0]);
        assert!(matches!(
            label_window(&w, &[], 3.0),
            Err(Error::InsufficientPeers(_))
        ));
    }

    #[test]
    fn snapshot_constant_window() {
        let samples: Vec<Sample> = (0..5)
            .map(|i| Sample::new(i * 15, 2.0, 50.0).unwrap())
            .collect();
        let w = DailyWindow::new(disk(0), Date::from_days(0), samples).unwrap();
        let f = extract_snapshot_features(&w).unwrap();
        assert_eq!(
            (f.mean_lat, f.min_lat, f.max_lat, f.std_lat),
            (2.0, 2.0, 2.0, 0.0)
        );
        assert_eq!((f.mean_tp, f.min_tp, f.max_tp, f.std_tp), (50.0, 50.0, 50.0, 0.0));
    }

    // Arithmetic oracle: latencies [1,3], throughputs [10,20].
    #[test]
    fn snapshot_two_sample_oracle() {
        let samples = vec![
            Sample::new(0, 1.0, 10.0).unwrap(),
            Sample::new(15, 3.0, 20.0).unwrap(),
        ];
        let w = DailyWindow::new(disk(0), Date::from_days(0), samples).unwrap();
        let f = extract_snapshot_features(&w).unwrap();
        assert!((f.mean_lat - 2.0).abs() < 1e-12);
        assert!((f.std_lat - 1.0).abs() < 1e-12); // population std
        assert_eq!((f.min_lat, f.max_lat), (1.0, 3.0));
        assert!((f.mean_tp - 15.0).abs() < 1e-12);
    }

    #[test]
    fn csr_no_fault_is_zero() {
        let truth = vec![FaultLabel::ground_truth(disk(0), Date::from_days(3), false)];
        let labels = csr_labels(&truth, (Date::from_days(1), Date::from_days(5)));
        assert_eq!(labels[&disk(0)].days_to_first_error, 0);
    }

    #[test]
    fn csr_first_day_fault_is_one() {
        let truth = vec![FaultLabel::ground_truth(disk(0), Date::from_days(1), true)];
        let labels = csr_labels(&truth, (Date::from_days(1), Date::from_days(5)));
        assert_eq!(labels[&disk(0)].days_to_first_error, 1);
    }

    // Linear-scan oracle: T on days {4, 7} of a range starting at day 1.
    #[test]
    fn csr_picks_first_error_day() {
        let truth = vec![
            FaultLabel::ground_truth(disk(0), Date::from_days(7), true),
            FaultLabel::ground_truth(disk(0), Date::from_days(4), true),
            FaultLabel::ground_truth(disk(0), Date::from_days(2), false),
        ];
        let labels = csr_labels(&truth, (Date::from_days(1), Date::from_days(10)));
        assert_eq!(labels[&disk(0)].days_to_first_error, 4);
    }

    proptest! {
        // min <= mean <= max for each metric on random windows.
        #[test]
        fn snapshot_min_mean_max_ordered(
            lats in proptest::collection::vec(0.0f64..1e3, 1..50),
            tps in proptest::collection::vec(0.0f64..1e3, 1..50),
        ) {
            let n = lats.len().min(tps.len());
            let samples: Vec<Sample> = (0..n)
                .map(|i| Sample::new(i as i64 * 15, lats[i], tps[i]).unwrap())
                .collect();
            let w = DailyWindow::new(disk(0), Date::from_days(0), samples).unwrap();
            let f = extract_snapshot_features(&w).unwrap();
            prop_assert!(f.min_lat <= f.mean_lat && f.mean_lat <= f.max_lat);
            prop_assert!(f.min_tp <= f.mean_tp && f.mean_tp <= f.max_tp);
            prop_assert!(f.std_lat >= 0.0 && f.std_tp >= 0.0);
        }

        // Shift equivariance: adding c shifts mean and threshold, std fixed.
        #[test]
        fn sigma_shift_equivariant(
            values in proptest::collection::vec(-1e3f64..1e3, 1..40),
            c in -1e3f64..1e3,
        ) {
            let t0 = compute_sigma_threshold(&values, 3.0).unwrap();
            let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
            let t1 = compute_sigma_threshold(&shifted, 3.0).unwrap();
            let scale = 1.0f64.max(t0.mean.abs()).max(t0.std.abs());
            prop_assert!((t1.mean - (t0.mean + c)).abs() < 1e-9 * scale.max(c.abs()));
            prop_assert!((t1.std - t0.std).abs() < 1e-7 * scale.max(1.0));
            prop_assert!((t1.threshold - (t0.threshold + c)).abs() < 1e-7 * scale.max(c.abs()).max(1.0));
        }

        // Verdicts are invariant under common positive rescaling.
        #[test]
        fn label_scale_invariant(
            base in 0.1f64..10.0,
            outlier in 0.1f64..100.0,
            scale in 0.001f64..1000.0,
        ) {
            let make = |s: f64| -> Vec<DailyWindow> {
                let mut ws: Vec<DailyWindow> =
                    (0..11).map(|n| window(n, 1, &[base * s, base * 1.01 * s])).collect();
                ws.push(window(11, 1, &[outlier * s, outlier * s]));
                ws
            };
            let a = make(1.0);
            let b = make(scale);
            let va = label_window(&a[11], &a, 3.0).unwrap().verdict;
            let vb = label_window(&b[11], &b, 3.0).unwrap().verdict;
            prop_assert_eq!(va, vb);
        }

        // Snapshot features are order-free statistics.
        #[test]
        fn snapshot_order_free(
            pairs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 2..30),
            seed in 0u64..1000,
        ) {
            let samples: Vec<Sample> = pairs
                .iter()
                .enumerate()
                .map(|(i, &(l, t))| Sample::new(i as i64 * 15, l, t).unwrap())
                .collect();
            let w = DailyWindow::new(disk(0), Date::from_days(0), samples.clone()).unwrap();
            let f0 = extract_snapshot_features(&w).unwrap();

            let mut shuffled = samples;
            crate::rng::Rng::new(seed).shuffle(&mut shuffled);
            // Re-timestamp so the trace invariant holds after shuffling values.
            let shuffled: Vec<Sample> = shuffled
                .into_iter()
                .enumerate()
                .map(|(i, s)| Sample::new(i as i64 * 15, s.latency_ms, s.throughput_mbps).unwrap())
                .collect();
            let w1 = DailyWindow::new(disk(0), Date::from_days(0), shuffled).unwrap();
            let f1 = extract_snapshot_features(&w1).unwrap();
            prop_assert!((f0.mean_lat - f1.mean_lat).abs() < 1e-9);
            prop_assert!((f0.std_lat - f1.std_lat).abs() < 1e-9);
            prop_assert_eq!(f0.min_lat, f1.min_lat);
            prop_assert_eq!(f0.max_lat, f1.max_lat);
        }
    }
}
