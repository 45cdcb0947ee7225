//! PERSEUS-format CSV ingestion and emission.
//!
//! Three file schemas, all UTF-8 with LF line endings and a header row:
//!
//! - trace:       `cluster,host,disk,timestamp_s,latency_ms,throughput_mbps`
//! - label:       `cluster,host,disk,date,verdict,score`
//! - prediction:  `model,cluster,host,disk,date,score`
//!
//! Dates are ISO-8601 (`YYYY-MM-DD`). Floats are written with Rust's
//! shortest round-trip formatting, so write-then-parse reproduces the
//! exact values, and identical inputs produce byte-identical files
//! (rows sorted by cluster, host, disk, then timestamp/date).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::model::{Date, DiskId, DiskTrace, FaultLabel, Sample, Verdict};

pub const TRACE_HEADER: &str = "cluster,host,disk,timestamp_s,latency_ms,throughput_mbps";
pub const LABEL_HEADER: &str = "cluster,host,disk,date,verdict,score";
pub const PREDICTION_HEADER: &str = "model,cluster,host,disk,date,score";

/// One row of a prediction file: a model's score for a disk-day.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub model: String,
    pub id: DiskId,
    pub date: Date,
    pub score: f64,
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

struct Fields<'a> {
    line_no: usize,
    fields: Vec<&'a str>,
}

impl<'a> Fields<'a> {
    fn split(line_no: usize, line: &'a str, expected: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(parse_err(
                line_no,
                fields.len().min(expected),
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        Ok(Fields { line_no, fields })
    }

    fn str(&self, col: usize) -> &'a str {
        self.fields[col - 1]
    }

    fn cluster(&self, col: usize) -> Result<char> {
        let s = self.str(col);
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Ok(c),
            _ => Err(parse_err(self.line_no, col, format!("bad cluster {s:?}"))),
        }
    }

    fn u8(&self, col: usize) -> Result<u8> {
        self.str(col)
            .parse()
            .map_err(|_| parse_err(self.line_no, col, format!("bad integer {:?}", self.str(col))))
    }

    fn i64(&self, col: usize) -> Result<i64> {
        self.str(col)
            .parse()
            .map_err(|_| parse_err(self.line_no, col, format!("bad integer {:?}", self.str(col))))
    }

    fn f64(&self, col: usize) -> Result<f64> {
        let v: f64 = self
            .str(col)
            .parse()
            .map_err(|_| parse_err(self.line_no, col, format!("bad number {:?}", self.str(col))))?;
        if !v.is_finite() {
            return Err(parse_err(self.line_no, col, "non-finite number"));
        }
        Ok(v)
    }

    fn date(&self, col: usize) -> Result<Date> {
        self.str(col)
            .parse()
            .map_err(|_| parse_err(self.line_no, col, format!("bad date {:?}", self.str(col))))
    }

    fn disk_id(&self, first_col: usize) -> Result<DiskId> {
        let cluster = self.cluster(first_col)?;
        let disk = self.u8(first_col + 2)?;
        DiskId::new(cluster, self.str(first_col + 1), disk)
            .map_err(|e| parse_err(self.line_no, first_col + 2, e.to_string()))
    }
}

fn check_header(line: Option<std::io::Result<String>>, expected: &str) -> Result<()> {
    match line {
        Some(Ok(l)) if l.trim_end() == expected => Ok(()),
        Some(Ok(l)) => Err(parse_err(1, 1, format!("bad header {l:?}, expected {expected:?}"))),
        Some(Err(e)) => Err(e.into()),
        None => Err(parse_err(1, 1, format!("missing header {expected:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Parses a trace CSV into one trace per disk, samples sorted by time.
pub fn parse_trace_csv<R: BufRead>(reader: R) -> Result<Vec<DiskTrace>> {
    let mut lines = reader.lines();
    check_header(lines.next(), TRACE_HEADER)?;
    let mut by_disk: BTreeMap<DiskId, Vec<Sample>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = Fields::split(line_no, line, 6)?;
        let id = f.disk_id(1)?;
        let ts = f.i64(4)?;
        let lat = f.f64(5)?;
        let tp = f.f64(6)?;
        if lat < 0.0 {
            return Err(parse_err(line_no, 5, format!("negative latency {lat}")));
        }
        if tp < 0.0 {
            return Err(parse_err(line_no, 6, format!("negative throughput {tp}")));
        }
        by_disk.entry(id).or_default().push(Sample {
            timestamp_s: ts,
            latency_ms: lat,
            throughput_mbps: tp,
        });
    }
    by_disk
        .into_iter()
        .map(|(id, mut samples)| {
            samples.sort_by_key(|s| s.timestamp_s);
            DiskTrace::new(id, samples)
        })
        .collect()
}

/// Writes traces in the stable row order (cluster, host, disk, timestamp).
pub fn write_trace_csv<W: Write>(traces: &[DiskTrace], mut out: W) -> Result<()> {
    let mut sorted: Vec<&DiskTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    writeln!(out, "{TRACE_HEADER}")?;
    for trace in sorted {
        let id = &trace.id;
        for s in trace.samples() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                id.cluster, id.host, id.disk, s.timestamp_s, s.latency_ms, s.throughput_mbps
            )?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

pub fn parse_labels_csv<R: BufRead>(reader: R) -> Result<Vec<FaultLabel>> {
    let mut lines = reader.lines();
    check_header(lines.next(), LABEL_HEADER)?;
    let mut labels = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = Fields::split(line_no, line, 6)?;
        let id = f.disk_id(1)?;
        let date = f.date(4)?;
        let verdict: Verdict = f
            .str(5)
            .parse()
            .map_err(|_| parse_err(line_no, 5, format!("bad verdict {:?}", f.str(5))))?;
        let score = f.f64(6)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(line_no, 6, format!("score {score} outside [0,1]")));
        }
        labels.push(FaultLabel {
            id,
            date,
            verdict,
            score,
        });
    }
    Ok(labels)
}

pub fn write_labels_csv<W: Write>(labels: &[FaultLabel], mut out: W) -> Result<()> {
    let mut sorted: Vec<&FaultLabel> = labels.iter().collect();
    sorted.sort_by(|a, b| (&a.id, a.date).cmp(&(&b.id, b.date)));
    writeln!(out, "{LABEL_HEADER}")?;
    for l in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            l.id.cluster, l.id.host, l.id.disk, l.date, l.verdict, l.score
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Predictions
// ---------------------------------------------------------------------------

pub fn parse_predictions_csv<R: BufRead>(reader: R) -> Result<Vec<PredictionRow>> {
    let mut lines = reader.lines();
    check_header(lines.next(), PREDICTION_HEADER)?;
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = Fields::split(line_no, line, 6)?;
        let model = f.str(1).to_string();
        if model.is_empty() {
            return Err(parse_err(line_no, 1, "empty model name"));
        }
        let id = f.disk_id(2)?;
        let date = f.date(5)?;
        let score = f.f64(6)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_err(line_no, 6, format!("score {score} outside [0,1]")));
        }
        rows.push(PredictionRow {
            model,
            id,
            date,
            score,
        });
    }
    Ok(rows)
}

pub fn write_predictions_csv<W: Write>(rows: &[PredictionRow], mut out: W) -> Result<()> {
    let mut sorted: Vec<&PredictionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.model, &a.id, a.date).cmp(&(&b.model, &b.id, b.date)));
    writeln!(out, "{PREDICTION_HEADER}")?;
    for r in sorted {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model, r.id.cluster, r.id.host, r.id.disk, r.date, r.score
        )?;
    }
    Ok(())
}
