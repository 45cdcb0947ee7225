//! Domain types: disk identities, telemetry samples, daily windows, and
//! fault labels.
//!
//! All types here are immutable value objects after construction and are
//! safe to share across worker threads. Timestamps are epoch seconds
//! interpreted in the trace's own local clock; calendar arithmetic is done
//! without a timezone database.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per day.
pub const DAY_SECONDS: i64 = 86_400;

/// Nominal maximum samples per daily window: 180 minutes at 15 s cadence.
pub const MAX_WINDOW_SAMPLES: usize = 720;

// ---------------------------------------------------------------------------
// Calendar dates
// ---------------------------------------------------------------------------

/// A calendar day, stored as days since 1970-01-01.
///
/// Formats and parses as ISO-8601 (`YYYY-MM-DD`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Date(i64);

impl Date {
    pub fn from_days(days: i64) -> Self {
        Date(days)
    }

    pub fn days(self) -> i64 {
        self.0
    }

    /// Day containing an epoch-seconds timestamp (local-clock convention).
    pub fn from_timestamp(ts: i64) -> Self {
        Date(ts.div_euclid(DAY_SECONDS))
    }

    pub fn from_ymd(y: i64, m: u32, d: u32) -> Self {
        // Days-from-civil (Howard Hinnant's algorithm).
        let y = if m <= 2 { y - 1 } else { y };
        let era = if y >= 0 { y } else { y - 399 } / 400;
        let yoe = y - era * 400;
        let mp = (m as i64 + 9) % 12;
        let doy = (153 * mp + 2) / 5 + d as i64 - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        Date(era * 146_097 + doe - 719_468)
    }

    /// (year, month, day) of this date.
    pub fn ymd(self) -> (i64, u32, u32) {
        // Civil-from-days (Howard Hinnant's algorithm).
        let z = self.0 + 719_468;
        let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let y = yoe + era * 400;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
        let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
        (if m <= 2 { y + 1 } else { y }, m, d)
    }

    pub fn add_days(self, n: i64) -> Self {
        Date(self.0 + n)
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (y, m, d) = self.ymd();
        write!(f, "{y:04}-{m:02}-{d:02}")
    }
}

impl FromStr for Date {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invariant(format!("invalid date {s:?}, expected YYYY-MM-DD"));
        let mut parts = s.split('-');
        let y: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let m: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let d: u32 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() || !(1..=12).contains(&m) || !(1..=31).contains(&d) {
            return Err(bad());
        }
        Ok(Date::from_ymd(y, m, d))
    }
}

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

/// One telemetry entry: latency and throughput at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since epoch, local-clock convention.
    pub timestamp_s: i64,
    /// Milliseconds, non-negative.
    pub latency_ms: f64,
    /// Megabytes per second, non-negative.
    pub throughput_mbps: f64,
}

impl Sample {
    pub fn new(timestamp_s: i64, latency_ms: f64, throughput_mbps: f64) -> Result<Self> {
        if latency_ms < 0.0 || !latency_ms.is_finite() {
            return Err(Error::Invariant(format!("negative latency {latency_ms}")));
        }
        if throughput_mbps < 0.0 || !throughput_mbps.is_finite() {
            return Err(Error::Invariant(format!(
                "negative throughput {throughput_mbps}"
            )));
        }
        Ok(Sample {
            timestamp_s,
            latency_ms,
            throughput_mbps,
        })
    }
}

/// Identity of one disk: cluster letter, host id, disk slot.
///
/// Orders lexicographically by (cluster, host, disk); this is the
/// documented tie-break order everywhere ranking appears.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DiskId {
    pub cluster: char,
    pub host: String,
    pub disk: u8,
}

/// Disks per host in the PERSEUS layout.
pub const DISKS_PER_HOST: u8 = 12;

impl DiskId {
    pub fn new(cluster: char, host: impl Into<String>, disk: u8) -> Result<Self> {
        if !cluster.is_ascii_uppercase() || cluster > 'Y' {
            return Err(Error::Invariant(format!(
                "cluster must be a letter A-Y, got {cluster:?}"
            )));
        }
        if disk >= DISKS_PER_HOST {
            return Err(Error::Invariant(format!(
                "disk index {disk} out of range (12 disks per host)"
            )));
        }
        Ok(DiskId {
            cluster,
            host: host.into(),
            disk,
        })
    }
}

impl fmt::Display for DiskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.cluster, self.host, self.disk)
    }
}

impl FromStr for DiskId {
    type Err = Error;

    /// Parses the `cluster/host/disk` form used in prompts and reports.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invariant(format!("invalid disk id {s:?}, expected C/host/N"));
        let mut parts = s.split('/');
        let cluster = parts.next().ok_or_else(bad)?;
        let host = parts.next().ok_or_else(bad)?;
        let disk = parts.next().ok_or_else(bad)?;
        if parts.next().is_some() || cluster.chars().count() != 1 || host.is_empty() {
            return Err(bad());
        }
        let cluster = cluster.chars().next().unwrap();
        let disk: u8 = disk.parse().map_err(|_| bad())?;
        DiskId::new(cluster, host, disk)
    }
}

/// One disk's time-ordered telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskTrace {
    pub id: DiskId,
    samples: Vec<Sample>,
}

impl DiskTrace {
    /// Builds a trace, requiring strictly increasing timestamps.
    pub fn new(id: DiskId, samples: Vec<Sample>) -> Result<Self> {
        for pair in samples.windows(2) {
            if pair[1].timestamp_s <= pair[0].timestamp_s {
                return Err(Error::Invariant(format!(
                    "timestamps not strictly increasing for {id}: {} then {}",
                    pair[0].timestamp_s, pair[1].timestamp_s
                )));
            }
        }
        Ok(DiskTrace { id, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// The daily collection window, as seconds of day `[start, end)`.
///
/// Defaults to 21:00:00-24:00:00 in the trace's local clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionWindow {
    pub start_s: u32,
    pub end_s: u32,
}

impl Default for CollectionWindow {
    fn default() -> Self {
        CollectionWindow {
            start_s: 21 * 3600,
            end_s: 24 * 3600,
        }
    }
}

impl CollectionWindow {
    pub fn contains(&self, timestamp_s: i64) -> bool {
        let sod = timestamp_s.rem_euclid(DAY_SECONDS) as u32;
        sod >= self.start_s && sod < self.end_s
    }
}

/// The slice of one disk's trace falling inside the collection window of
/// a single calendar day. Never empty; at most 720 samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyWindow {
    pub id: DiskId,
    pub date: Date,
    samples: Vec<Sample>,
}

impl DailyWindow {
    pub fn new(id: DiskId, date: Date, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("daily window has no samples"));
        }
        if samples.len() > MAX_WINDOW_SAMPLES {
            return Err(Error::Invariant(format!(
                "window {id} {date} has {} samples, limit {MAX_WINDOW_SAMPLES}",
                samples.len()
            )));
        }
        Ok(DailyWindow { id, date, samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty windows
    }

    pub fn mean_latency(&self) -> f64 {
        self.samples.iter().map(|s| s.latency_ms).sum::<f64>() / self.samples.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Labels and features
// ---------------------------------------------------------------------------

/// Daily verdict vocabulary: `T` (faulty) or `F` (non-faulty).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    T,
    F,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::T => write!(f, "T"),
            Verdict::F => write!(f, "F"),
        }
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T" | "t" => Ok(Verdict::T),
            "F" | "f" => Ok(Verdict::F),
            other => Err(Error::Invariant(format!(
                "invalid verdict {other:?}, expected T or F"
            ))),
        }
    }
}

/// Per-disk per-day ground truth or prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLabel {
    pub id: DiskId,
    pub date: Date,
    pub verdict: Verdict,
    /// In `[0,1]`; ground-truth labels carry exactly 0.0 or 1.0.
    pub score: f64,
}

impl FaultLabel {
    pub fn ground_truth(id: DiskId, date: Date, faulty: bool) -> Self {
        FaultLabel {
            id,
            date,
            verdict: if faulty { Verdict::T } else { Verdict::F },
            score: if faulty { 1.0 } else { 0.0 },
        }
    }
}

/// Names of the eight snapshot features, in vector order.
pub const FEATURE_NAMES: [&str; 8] = [
    "mean_lat", "min_lat", "max_lat", "std_lat", "mean_tp", "min_tp", "max_tp", "std_tp",
];

/// Summary statistics of one daily window: the classical detectors'
/// feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFeatures {
    pub mean_lat: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub std_lat: f64,
    pub mean_tp: f64,
    pub min_tp: f64,
    pub max_tp: f64,
    pub std_tp: f64,
}

impl SnapshotFeatures {
    pub fn to_vec(self) -> Vec<f64> {
        vec![
            self.mean_lat,
            self.min_lat,
            self.max_lat,
            self.std_lat,
            self.mean_tp,
            self.min_tp,
            self.max_tp,
            self.std_tp,
        ]
    }
}

/// Days from training start to the first observed error, 1-based.
/// Zero means no fault was observed in the training segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsrLabel {
    pub days_to_first_error: u32,
}

// ---------------------------------------------------------------------------
// Windowing operations
// ---------------------------------------------------------------------------

/// Splits a trace into daily windows using the default 21:00-24:00
/// collection window. Samples outside the window are dropped.
pub fn window_split(trace: &DiskTrace) -> Result<Vec<DailyWindow>> {
    window_split_with(trace, CollectionWindow::default())
}

/// [`window_split`] with an explicit collection window.
pub fn window_split_with(trace: &DiskTrace, cw: CollectionWindow) -> Result<Vec<DailyWindow>> {
    if trace.is_empty() {
        return Err(Error::EmptyInput("trace has no samples"));
    }
    let mut windows: Vec<DailyWindow> = Vec::new();
    let mut current: Vec<Sample> = Vec::new();
    let mut current_date: Option<Date> = None;
    for &s in trace.samples() {
        if !cw.contains(s.timestamp_s) {
            continue;
        }
        let date = Date::from_timestamp(s.timestamp_s);
        if current_date != Some(date) {
            if let Some(d) = current_date.take() {
                windows.push(DailyWindow::new(trace.id.clone(), d, std::mem::take(&mut current))?);
            }
            current_date = Some(date);
        }
        current.push(s);
    }
    if let Some(d) = current_date {
        windows.push(DailyWindow::new(trace.id.clone(), d, current)?);
    }
    Ok(windows)
}

/// Splits a trace's daily windows into train (date <= split_day) and
/// test (later) segments.
pub fn train_test_split(
    trace: &DiskTrace,
    split_day: Date,
) -> Result<(Vec<DailyWindow>, Vec<DailyWindow>)> {
    let windows = window_split(trace)?;
    split_windows(windows, split_day)
}

/// [`train_test_split`] on already-computed windows.
pub fn split_windows(
    windows: Vec<DailyWindow>,
    split_day: Date,
) -> Result<(Vec<DailyWindow>, Vec<DailyWindow>)> {
    let first = windows.first().map(|w| w.date);
    let last = windows.last().map(|w| w.date);
    match (first, last) {
        (Some(first), Some(last)) if split_day >= first && split_day <= last => {
            let (train, test) = windows.into_iter().partition(|w| w.date <= split_day);
            Ok((train, test))
        }
        (Some(first), Some(last)) => Err(Error::InvalidSplit {
            split_day: split_day.to_string(),
            first: first.to_string(),
            last: last.to_string(),
        }),
        _ => Err(Error::EmptyInput("no windows to split")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn disk(n: u8) -> DiskId {
        DiskId::new('A', "h000", n).unwrap()
    }

    /// A sample inside the evening window of the given day.
    fn evening_sample(day: i64, offset_s: i64) -> Sample {
        Sample::new(day * DAY_SECONDS + 21 * 3600 + offset_s, 1.0, 100.0).unwrap()
    }

    #[test]
    fn date_roundtrips_iso() {
        for (days, iso) in [
            (0, "1970-01-01"),
            (11_016, "2000-02-29"),
            (20_000, "2024-10-04"),
        ] {
            let d = Date::from_days(days);
            assert_eq!(d.to_string(), iso);
            assert_eq!(iso.parse::<Date>().unwrap(), d);
        }
    }

    #[test]
    fn date_ymd_inverse() {
        for days in (-1000..40_000).step_by(97) {
            let d = Date::from_days(days);
            let (y, m, dd) = d.ymd();
            assert_eq!(Date::from_ymd(y, m, dd), d);
        }
    }

    #[test]
    fn disk_id_rejects_out_of_range() {
        assert!(DiskId::new('A', "h0", 12).is_err());
        assert!(DiskId::new('Z', "h0", 0).is_err());
        assert!(DiskId::new('a', "h0", 0).is_err());
        assert!(DiskId::new('Y', "h0", 11).is_ok());
    }

    #[test]
    fn disk_id_display_parse_roundtrip() {
        let id = DiskId::new('B', "host-17", 5).unwrap();
        assert_eq!(id.to_string(), "B/host-17/5");
        assert_eq!("B/host-17/5".parse::<DiskId>().unwrap(), id);
    }

    #[test]
    fn sample_rejects_negative_metrics() {
        assert!(Sample::new(0, -1.0, 5.0).is_err());
        assert!(Sample::new(0, 1.0, -5.0).is_err());
    }

    #[test]
    fn trace_rejects_unsorted_timestamps() {
        let s = |t| Sample::new(t, 1.0, 1.0).unwrap();
        assert!(DiskTrace::new(disk(0), vec![s(10), s(10)]).is_err());
        assert!(DiskTrace::new(disk(0), vec![s(10), s(5)]).is_err());
        assert!(DiskTrace::new(disk(0), vec![s(5), s(10)]).is_ok());
    }

    // 720 samples all inside one evening window -> 1 window of 720.
    #[test]
    fn window_split_full_evening() {
        let samples: Vec<Sample> = (0..720).map(|i| evening_sample(3, i * 15)).collect();
        let trace = DiskTrace::new(disk(0), samples).unwrap();
        let windows = window_split(&trace).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].len(), 720);
        assert_eq!(windows[0].date, Date::from_days(3));
    }

    #[test]
    fn window_split_empty_trace_errors() {
        let trace = DiskTrace::new(disk(0), vec![]).unwrap();
        assert!(matches!(window_split(&trace), Err(Error::EmptyInput(_))));
    }

    // Brute-force bucketing oracle: assign each in-window sample to its
    // date independently, then compare.
    #[test]
    fn window_split_two_evenings_matches_bucketing_oracle() {
        let mut samples = Vec::new();
        for day in [3, 4] {
            for i in 0..720 {
                samples.push(evening_sample(day, i * 15));
            }
        }
        let trace = DiskTrace::new(disk(0), samples.clone()).unwrap();
        let windows = window_split(&trace).unwrap();
        assert_eq!(windows.len(), 2);
        assert!(windows.iter().all(|w| w.len() == 720));

        let mut oracle: std::collections::BTreeMap<Date, Vec<Sample>> = Default::default();
        let cw = CollectionWindow::default();
        for s in samples {
            if cw.contains(s.timestamp_s) {
                oracle.entry(Date::from_timestamp(s.timestamp_s)).or_default().push(s);
            }
        }
        assert_eq!(oracle.len(), windows.len());
        for (w, (date, expected)) in windows.iter().zip(oracle.iter()) {
            assert_eq!(w.date, *date);
            assert_eq!(w.samples(), expected.as_slice());
        }
    }

    #[test]
    fn window_split_drops_out_of_window_samples() {
        let mut samples = vec![Sample::new(3 * DAY_SECONDS + 12 * 3600, 1.0, 1.0).unwrap()];
        samples.push(evening_sample(3, 0));
        let trace = DiskTrace::new(disk(0), samples).unwrap();
        let windows = window_split(&trace).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].len(), 1);
    }

    // Midnight boundary: 23:59:59 is in, 24:00:00 belongs to the next day
    // and is out of the window.
    #[test]
    fn window_boundary_is_half_open() {
        let cw = CollectionWindow::default();
        assert!(cw.contains(3 * DAY_SECONDS + 23 * 3600 + 59 * 60 + 59));
        assert!(!cw.contains(4 * DAY_SECONDS));
        assert!(cw.contains(3 * DAY_SECONDS + 21 * 3600));
        assert!(!cw.contains(3 * DAY_SECONDS + 21 * 3600 - 1));
    }

    fn ten_day_trace() -> DiskTrace {
        let mut samples = Vec::new();
        for day in 1..=10 {
            for i in 0..4 {
                samples.push(evening_sample(day, i * 15));
            }
        }
        DiskTrace::new(disk(0), samples).unwrap()
    }

    // 10 windows, split after day 7 -> (7, 3).
    #[test]
    fn split_counts() {
        let (train, test) = train_test_split(&ten_day_trace(), Date::from_days(7)).unwrap();
        assert_eq!((train.len(), test.len()), (7, 3));
    }

    #[test]
    fn split_before_first_window_errors() {
        let err = train_test_split(&ten_day_trace(), Date::from_days(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidSplit { .. }));
        let err = train_test_split(&ten_day_trace(), Date::from_days(11)).unwrap_err();
        assert!(matches!(err, Error::InvalidSplit { .. }));
    }

    // Enumeration oracle: 5 windows, split after day 3.
    #[test]
    fn split_dates_match_enumeration() {
        let mut samples = Vec::new();
        for day in 1..=5 {
            samples.push(evening_sample(day, 0));
        }
        let trace = DiskTrace::new(disk(0), samples).unwrap();
        let (train, test) = train_test_split(&trace, Date::from_days(3)).unwrap();
        let train_days: Vec<i64> = train.iter().map(|w| w.date.days()).collect();
        let test_days: Vec<i64> = test.iter().map(|w| w.date.days()).collect();
        assert_eq!(train_days, vec![1, 2, 3]);
        assert_eq!(test_days, vec![4, 5]);
    }

    // Order-preserving partition: windows concatenated in date order equal
    // the in-window subsequence of the trace.
    proptest::proptest! {
        #[test]
        fn window_split_is_order_preserving_partition(
            gaps in proptest::collection::vec(1i64..40_000, 1..300),
        ) {
            let mut samples = Vec::new();
            let mut ts = 0i64;
            for gap in gaps {
                ts += gap;
                samples.push(Sample::new(ts, 1.0, 1.0).unwrap());
            }
            let trace = DiskTrace::new(disk(0), samples.clone()).unwrap();
            let cw = CollectionWindow::default();
            let in_window: Vec<Sample> = samples
                .iter()
                .copied()
                .filter(|s| cw.contains(s.timestamp_s))
                .collect();
            let windows = window_split(&trace).unwrap();
            let concat: Vec<Sample> =
                windows.iter().flat_map(|w| w.samples().iter().copied()).collect();
            proptest::prop_assert_eq!(concat, in_window);
            for pair in windows.windows(2) {
                proptest::prop_assert!(pair[0].date < pair[1].date);
            }
        }
    }

    // Disjoint, exhaustive partition for every valid split day.
    #[test]
    fn split_partitions_for_every_valid_day() {
        let trace = ten_day_trace();
        let all = window_split(&trace).unwrap();
        for day in 1..=10 {
            let (train, test) = train_test_split(&trace, Date::from_days(day)).unwrap();
            assert_eq!(train.len() + test.len(), all.len());
            assert!(train.iter().all(|w| w.date.days() <= day));
            assert!(test.iter().all(|w| w.date.days() > day));
        }
    }
}
