//! The evaluation harness: lookback x threshold sweeps, confusion
//! counts, failure rates, and heatmap emission (CSV + SVG).
//!
//! A disk is predicted positive for a cell when its maximum daily score
//! over the lookback window reaches the threshold (mean aggregation is
//! available behind [`Aggregation`]); it is actually positive when any
//! ground-truth `T` falls in the window. Windows are clipped to the
//! date range the truth covers, so short runs still evaluate long
//! lookbacks. Precision and recall carry an explicit undefined sentinel
//! (`None`) when their denominator is zero - never a fake 0 - and render
//! as blank CSV cells.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Date, DiskId, FaultLabel, Verdict};

/// Default lookback windows, in days.
pub const DEFAULT_LOOKBACKS: [u32; 4] = [1, 3, 7, 15];

/// Default thresholds 0.1 .. 1.0.
pub fn default_thresholds() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// One model's per-(disk, day) scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model: String,
    scores: BTreeMap<(DiskId, Date), f64>,
}

impl PredictionSet {
    pub fn new(model: impl Into<String>) -> Self {
        PredictionSet {
            model: model.into(),
            scores: BTreeMap::new(),
        }
    }

    /// Inserts one score; rejects duplicates and out-of-range values.
    pub fn insert(&mut self, id: DiskId, date: Date, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Invariant(format!(
                "score {score} outside [0,1] for {id} {date}"
            )));
        }
        if self.scores.insert((id.clone(), date), score).is_some() {
            return Err(Error::Invariant(format!(
                "duplicate prediction for {id} {date}"
            )));
        }
        Ok(())
    }

    pub fn from_rows(model: impl Into<String>, rows: &[crate::csv::PredictionRow]) -> Result<Self> {
        let mut set = PredictionSet::new(model);
        for r in rows {
            set.insert(r.id.clone(), r.date, r.score)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, id: &DiskId, date: Date) -> Option<f64> {
        self.scores.get(&(id.clone(), date)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(DiskId, Date), &f64)> {
        self.scores.iter()
    }

    pub fn to_rows(&self) -> Vec<crate::csv::PredictionRow> {
        self.scores
            .iter()
            .map(|((id, date), &score)| crate::csv::PredictionRow {
                model: self.model.clone(),
                id: id.clone(),
                date: *date,
                score,
            })
            .collect()
    }
}

/// How daily scores aggregate over the lookback window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    /// Did the model ever flag this disk in the window (default).
    Max,
    Mean,
}

/// Confusion counts of one (lookback, threshold) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl CellCounts {
    pub fn precision(&self) -> Option<f64> {
        match self.tp + self.fp {
            0 => None,
            d => Some(self.tp as f64 / d as f64),
        }
    }

    pub fn recall(&self) -> Option<f64> {
        match self.tp + self.fn_ {
            0 => None,
            d => Some(self.tp as f64 / d as f64),
        }
    }

    pub fn predicted_positive(&self) -> usize {
        self.tp + self.fp
    }
}

fn truth_range(truth: &[FaultLabel]) -> Result<(Date, Date)> {
    let mut dates = truth.iter().map(|l| l.date);
    let first = dates.next().ok_or(Error::EmptyInput("no truth labels"))?;
    Ok(truth.iter().map(|l| l.date).fold((first, first), |(lo, hi), d| {
        (lo.min(d), hi.max(d))
    }))
}

/// Confusion counts for one cell, documented window semantics:
/// `[eval_date - lookback + 1, eval_date]` clipped to the truth range.
pub fn evaluate_cell(
    preds: &PredictionSet,
    truth: &[FaultLabel],
    eval_date: Date,
    lookback: u32,
    threshold: f64,
) -> Result<CellCounts> {
    evaluate_cell_with(preds, truth, eval_date, lookback, threshold, Aggregation::Max)
}

/// [`evaluate_cell`] with an explicit aggregation rule.
pub fn evaluate_cell_with(
    preds: &PredictionSet,
    truth: &[FaultLabel],
    eval_date: Date,
    lookback: u32,
    threshold: f64,
    agg: Aggregation,
) -> Result<CellCounts> {
    if lookback < 1 {
        return Err(Error::Config("lookback must be >= 1 day".into()));
    }
    let (t_first, t_last) = truth_range(truth)?;
    let start = eval_date.add_days(-(lookback as i64) + 1).max(t_first);
    let end = eval_date.min(t_last);
    if start > end {
        return Err(Error::EmptyInput(
            "lookback window does not intersect the truth range",
        ));
    }

    let in_window = |d: Date| d >= start && d <= end;
    let mut disks: BTreeSet<&DiskId> = BTreeSet::new();
    let mut actual_positive: BTreeSet<&DiskId> = BTreeSet::new();
    for label in truth {
        if in_window(label.date) {
            disks.insert(&label.id);
            if label.verdict == Verdict::T {
                actual_positive.insert(&label.id);
            }
        }
    }
    if disks.is_empty() {
        return Err(Error::EmptyInput("no disks in the evaluation window"));
    }

    let mut counts = CellCounts::default();
    for disk in disks {
        let mut agg_score = 0.0f64;
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut day = start;
        while day <= end {
            if let Some(s) = preds.get(disk, day) {
                agg_score = agg_score.max(s);
                sum += s;
                n += 1;
            }
            day = day.add_days(1);
        }
        let score = match agg {
            Aggregation::Max => agg_score,
            Aggregation::Mean => {
                if n > 0 {
                    sum / n as f64
                } else {
                    0.0
                }
            }
        };
        let predicted = score >= threshold;
        let actual = actual_positive.contains(disk);
        match (predicted, actual) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(counts)
}

/// Precision/recall/count matrices over (lookback, threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchGrid {
    pub model: String,
    pub lookbacks: Vec<u32>,
    pub thresholds: Vec<f64>,
    /// Row-major: cells[l * thresholds.len() + t].
    pub cells: Vec<CellCounts>,
}

impl BenchGrid {
    pub fn cell(&self, l: usize, t: usize) -> &CellCounts {
        &self.cells[l * self.thresholds.len() + t]
    }

    pub fn metric(&self, metric: Metric, l: usize, t: usize) -> Option<f64> {
        match metric {
            Metric::Precision => self.cell(l, t).precision(),
            Metric::Recall => self.cell(l, t).recall(),
        }
    }

    /// Best cell by a metric, with its (lookback, threshold).
    pub fn best(&self, metric: Metric) -> Option<(u32, f64, f64)> {
        let mut best: Option<(u32, f64, f64)> = None;
        for (li, &l) in self.lookbacks.iter().enumerate() {
            for (ti, &t) in self.thresholds.iter().enumerate() {
                if let Some(v) = self.metric(metric, li, ti) {
                    if best.is_none_or(|(_, _, bv)| v > bv) {
                        best = Some((l, t, v));
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Precision,
    Recall,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
        }
    }
}

/// Sweeps every (lookback, threshold) cell.
pub fn sweep_grid(
    preds: &PredictionSet,
    truth: &[FaultLabel],
    eval_date: Date,
    lookbacks: &[u32],
    thresholds: &[f64],
) -> Result<BenchGrid> {
    sweep_grid_with(preds, truth, eval_date, lookbacks, thresholds, Aggregation::Max)
}

pub fn sweep_grid_with(
    preds: &PredictionSet,
    truth: &[FaultLabel],
    eval_date: Date,
    lookbacks: &[u32],
    thresholds: &[f64],
    agg: Aggregation,
) -> Result<BenchGrid> {
    if lookbacks.is_empty() || thresholds.is_empty() {
        return Err(Error::Config("empty lookbacks or thresholds".into()));
    }
    let mut cells = Vec::with_capacity(lookbacks.len() * thresholds.len());
    for &l in lookbacks {
        for &t in thresholds {
            cells.push(evaluate_cell_with(preds, truth, eval_date, l, t, agg)?);
        }
    }
    Ok(BenchGrid {
        model: preds.model.clone(),
        lookbacks: lookbacks.to_vec(),
        thresholds: thresholds.to_vec(),
        cells,
    })
}

// ---------------------------------------------------------------------------
// Failure rate
// ---------------------------------------------------------------------------

/// Share of disk-day predictions at or above a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureRate {
    pub total: usize,
    pub failures: usize,
}

impl FailureRate {
    pub fn from_counts(failures: usize, total: usize) -> Self {
        FailureRate { failures, total }
    }

    pub fn rate(&self) -> f64 {
        100.0 * self.failures as f64 / self.total as f64
    }

    /// Percentage with 2 decimals, the report format.
    pub fn rate_string(&self) -> String {
        format!("{:.2}%", self.rate())
    }
}

/// Counts disk-days with score >= t over an inclusive date window.
pub fn failure_rate(
    preds: &PredictionSet,
    threshold: f64,
    window: (Date, Date),
) -> Result<FailureRate> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("no predictions for failure rate"));
    }
    let (start, end) = window;
    let mut total = 0usize;
    let mut failures = 0usize;
    for ((_, date), &score) in preds.iter() {
        if *date >= start && *date <= end {
            total += 1;
            if score >= threshold {
                failures += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no predictions inside the window"));
    }
    Ok(FailureRate { total, failures })
}

// ---------------------------------------------------------------------------
// Heatmap emission
// ---------------------------------------------------------------------------

/// CSV: first cell `lookback\threshold`, thresholds at 1 decimal as
/// column headers, values at 4 decimals, undefined cells empty.
pub fn emit_heatmap_csv(grid: &BenchGrid, metric: Metric) -> String {
    let mut out = String::from("lookback\\threshold");
    for t in &grid.thresholds {
        out.push_str(&format!(",{t:.1}"));
    }
    out.push('\n');
    for (li, l) in grid.lookbacks.iter().enumerate() {
        out.push_str(&l.to_string());
        for ti in 0..grid.thresholds.len() {
            match grid.metric(metric, li, ti) {
                Some(v) => out.push_str(&format!(",{v:.4}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Parsed heatmap contents: (lookbacks, thresholds, row-major values).
pub type HeatmapContents = (Vec<u32>, Vec<f64>, Vec<Option<f64>>);

/// Parses a heatmap CSV back into its grid values.
pub fn parse_heatmap_csv(text: &str) -> Result<HeatmapContents> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            column: 1,
            message: "empty heatmap".into(),
        })?;
    let mut cols = header.split(',');
    let corner = cols.next().unwrap_or_default();
    if corner != "lookback\\threshold" {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("bad corner cell {corner:?}"),
        });
    }
    let thresholds: Vec<f64> = cols
        .map(|c| {
            c.parse().map_err(|_| Error::Parse {
                line: 1,
                column: 2,
                message: format!("bad threshold {c:?}"),
            })
        })
        .collect::<Result<_>>()?;
    let mut lookbacks = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let l: u32 = cols
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Parse {
                line: i + 2,
                column: 1,
                message: "bad lookback".into(),
            })?;
        lookbacks.push(l);
        for (j, c) in cols.enumerate() {
            if c.is_empty() {
                values.push(None);
            } else {
                values.push(Some(c.parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    column: j + 2,
                    message: format!("bad value {c:?}"),
                })?));
            }
        }
        if values.len() != lookbacks.len() * thresholds.len() {
            return Err(Error::Parse {
                line: i + 2,
                column: 1,
                message: "row width mismatch".into(),
            });
        }
    }
    Ok((lookbacks, thresholds, values))
}

/// Three-stop sequential ramp, cool to warm: deep purple through dark
/// pink to pale peach. Warmer = higher.
fn ramp(v: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, (f64, f64, f64)); 3] = [
        (0.0, (45.0, 15.0, 65.0)),    // deep purple
        (0.5, (195.0, 68.0, 122.0)),  // dark pink
        (1.0, (255.0, 223.0, 196.0)), // pale peach
    ];
    let v = v.clamp(0.0, 1.0);
    let (lo, hi) = if v <= 0.5 {
        (STOPS[0], STOPS[1])
    } else {
        (STOPS[1], STOPS[2])
    };
    let f = (v - lo.0) / (hi.0 - lo.0);
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    (
        mix(lo.1 .0, hi.1 .0),
        mix(lo.1 .1, hi.1 .1),
        mix(lo.1 .2, hi.1 .2),
    )
}

/// Self-contained SVG heatmap; undefined cells render as hatched gray.
pub fn emit_heatmap_svg(grid: &BenchGrid, metric: Metric) -> String {
    const CELL: f64 = 48.0;
    const LEFT: f64 = 84.0;
    const TOP: f64 = 56.0;
    const LEGEND: f64 = 70.0;
    let cols = grid.thresholds.len();
    let rows = grid.lookbacks.len();
    let width = LEFT + CELL * cols as f64 + 20.0;
    let height = TOP + CELL * rows as f64 + LEGEND;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"20\" font-size=\"14\">{} {} by lookback (rows) and threshold (cols)</text>\n",
        escape_xml(&grid.model),
        metric.name()
    ));
    for (ti, t) in grid.thresholds.iter().enumerate() {
        let x = LEFT + CELL * (ti as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{t:.1}</text>\n",
            TOP - 8.0
        ));
    }
    for (li, l) in grid.lookbacks.iter().enumerate() {
        let y = TOP + CELL * (li as f64 + 0.5) + 4.0;
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{y:.1}\" text-anchor=\"end\">{l}d</text>\n",
            LEFT - 8.0
        ));
    }
    for li in 0..rows {
        for ti in 0..cols {
            let x = LEFT + CELL * ti as f64;
            let y = TOP + CELL * li as f64;
            match grid.metric(metric, li, ti) {
                Some(v) => {
                    let (r, g, b) = ramp(v);
                    let luma = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                    let text_fill = if luma < 140.0 { "#ffffff" } else { "#222222" };
                    svg.push_str(&format!(
                        "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                         fill=\"rgb({r},{g},{b})\" stroke=\"#ffffff\"/>\n"
                    ));
                    svg.push_str(&format!(
                        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{text_fill}\">{v:.2}</text>\n",
                        x + CELL / 2.0,
                        y + CELL / 2.0 + 4.0
                    ));
                }
                None => {
                    // Undefined cell: gray with a diagonal slash.
                    svg.push_str(&format!(
                        "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{CELL}\" height=\"{CELL}\" \
                         fill=\"#f0f0f0\" stroke=\"#ffffff\"/>\n\
                         <line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#bbbbbb\"/>\n",
                        y + CELL,
                        x + CELL
                    ));
                }
            }
        }
    }
    // Legend ramp.
    let ly = TOP + CELL * rows as f64 + 24.0;
    for i in 0..100 {
        let (r, g, b) = ramp(i as f64 / 99.0);
        let x = LEFT + i as f64 * (CELL * cols as f64) / 100.0;
        svg.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{ly:.1}\" width=\"{:.1}\" height=\"12\" fill=\"rgb({r},{g},{b})\"/>\n",
            (CELL * cols as f64) / 100.0 + 0.5
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{LEFT}\" y=\"{:.1}\">0.0</text>\n<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1.0</text>\n",
        ly + 26.0,
        LEFT + CELL * cols as f64,
        ly + 26.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
