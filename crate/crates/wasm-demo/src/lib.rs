//! Browser demo for the fail-slow benchmark: generate a synthetic
//! cluster and explore it interactively. Three operations are exported
//! to JavaScript, all returning self-contained SVG or JSON strings:
//!
//! - [`traces_svg`]: per-disk daily mean latency curves with injected
//!   faults highlighted;
//! - [`labeler_json`]: the 3-sigma labeler's verdicts against ground
//!   truth, with the confusion summary;
//! - [`heatmap_svg`]: an end-to-end isolation-forest or autoencoder run
//!   rendered as a precision/recall heatmap.
//!
//! Everything is deterministic in the seed, so the same knob settings
//! always draw the same picture.

use std::collections::BTreeMap;

use wasm_bindgen::prelude::wasm_bindgen;

use failslow_core::autodiff::OptimizerConfig;
use failslow_core::bench::{
    default_thresholds, emit_heatmap_svg, sweep_grid, Metric, PredictionSet, DEFAULT_LOOKBACKS,
};
use failslow_core::detectors::{
    classify_by_mse, iforest_score, train_autoencoder, train_isolation_forest, AeConfig,
    IForestParams,
};
use failslow_core::gen::{cluster_windows, generate_cluster, ClusterSpec, GeneratedCluster};
use failslow_core::labeling::{extract_snapshot_features, label_fleet};
use failslow_core::model::{DailyWindow, Date, DiskId, Verdict};
use failslow_core::rng::derive_seed;
use failslow_core::{Error, Result};

/// Demo guardrails: keep interactions under ~a second in the browser.
const MAX_HOSTS: usize = 6;
const MAX_DAYS: usize = 14;
const DEMO_CADENCE_S: u32 = 60;

fn demo_spec(hosts: u32, days: u32, fault_fraction: f64, seed: u64) -> Result<ClusterSpec> {
    if hosts as usize > MAX_HOSTS || days as usize > MAX_DAYS {
        return Err(Error::Config(format!(
            "demo is capped at {MAX_HOSTS} hosts and {MAX_DAYS} days"
        )));
    }
    Ok(ClusterSpec {
        n_hosts: hosts.max(1) as usize,
        n_days: days.max(2) as usize,
        cadence_s: DEMO_CADENCE_S,
        seed: derive_seed(seed, "demo"),
        fault_fraction: fault_fraction.clamp(0.0, 1.0),
        ..Default::default()
    })
}

fn split_day(spec: &ClusterSpec) -> Date {
    spec.start_day.add_days((spec.n_days as i64 + 1) / 2 - 1)
}

// ---------------------------------------------------------------------------
// Trace plot
// ---------------------------------------------------------------------------

/// Per-disk daily mean latency polylines, faulty disks in warm colors
/// with onset ticks.
fn traces_svg_inner(hosts: u32, days: u32, fault_fraction: f64, seed: u64) -> Result<String> {
    let spec = demo_spec(hosts, days, fault_fraction, seed)?;
    let cluster = generate_cluster(&spec)?;
    let windows = cluster_windows(&cluster)?;

    let mut per_disk: BTreeMap<DiskId, Vec<(Date, f64)>> = BTreeMap::new();
    for w in &windows {
        per_disk.entry(w.id.clone()).or_default().push((w.date, w.mean_latency()));
    }
    let max_lat = per_disk
        .values()
        .flatten()
        .map(|(_, l)| *l)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-9);

    const W: f64 = 760.0;
    const H: f64 = 420.0;
    const L: f64 = 56.0;
    const T: f64 = 40.0;
    const B: f64 = 34.0;
    let plot_w = W - L - 16.0;
    let plot_h = H - T - B;
    let n_days = spec.n_days as f64;
    let x_of = |day_idx: f64| L + plot_w * (day_idx + 0.5) / n_days;
    let y_of = |lat: f64| T + plot_h * (1.0 - lat / max_lat);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"monospace\" font-size=\"11\">\n\
         <text x=\"{L}\" y=\"18\" font-size=\"13\">daily mean latency per disk \
         ({} hosts x 12 disks, {} faulty)</text>\n",
        spec.n_hosts,
        cluster.faults.len()
    );
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{:.1}\" stroke=\"#888\"/>\n\
         <line x1=\"{L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#888\"/>\n\
         <text x=\"8\" y=\"{:.1}\">{max_lat:.2}ms</text>\n\
         <text x=\"8\" y=\"{:.1}\">0</text>\n",
        T + plot_h,
        T + plot_h,
        L + plot_w,
        T + plot_h,
        T + 10.0,
        T + plot_h,
    ));
    for d in 0..spec.n_days {
        let date = spec.start_day.add_days(d as i64);
        let (_, _, dom) = date.ymd();
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#666\">{dom}</text>\n",
            x_of(d as f64),
            T + plot_h + 16.0
        ));
    }

    let fault_styles: BTreeMap<&DiskId, &failslow_core::gen::InjectedFault> =
        cluster.faults.iter().map(|f| (&f.id, f)).collect();
    let warm = ["#d62755", "#e4572e", "#b03bb0", "#c98116", "#dd3d3d", "#a1477e"];
    let mut warm_idx = 0usize;
    for (id, points) in &per_disk {
        let path: Vec<String> = points
            .iter()
            .map(|(date, lat)| {
                let di = (date.days() - spec.start_day.days()) as f64;
                format!("{:.1},{:.1}", x_of(di), y_of(*lat))
            })
            .collect();
        match fault_styles.get(id) {
            Some(fault) => {
                let color = warm[warm_idx % warm.len()];
                warm_idx += 1;
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                    path.join(" ")
                ));
                let onset_idx = (fault.onset_day.days() - spec.start_day.days()) as f64;
                svg.push_str(&format!(
                    "<line x1=\"{x:.1}\" y1=\"{T}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
                     stroke=\"{color}\" stroke-dasharray=\"3,3\" opacity=\"0.6\"/>\n\
                     <text x=\"{x:.1}\" y=\"{:.1}\" fill=\"{color}\" text-anchor=\"middle\">{id} {:?}</text>\n",
                    T + plot_h,
                    T - 4.0,
                    fault.style,
                    x = x_of(onset_idx),
                ));
            }
            None => {
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"#9db2c9\" stroke-width=\"0.8\" opacity=\"0.7\"/>\n",
                    path.join(" ")
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

// ---------------------------------------------------------------------------
// Labeler comparison
// ---------------------------------------------------------------------------

/// JSON report: per-day confusion of the 3-sigma labeler against the
/// generator's ground truth, plus flagged disk-days.
fn labeler_json_inner(
    hosts: u32,
    days: u32,
    fault_fraction: f64,
    seed: u64,
    k: f64,
) -> Result<String> {
    let spec = demo_spec(hosts, days, fault_fraction, seed)?;
    let cluster = generate_cluster(&spec)?;
    let windows = cluster_windows(&cluster)?;
    let labels = label_fleet(&windows, k)?;
    let truth: BTreeMap<(DiskId, Date), Verdict> = cluster
        .truth
        .iter()
        .map(|l| ((l.id.clone(), l.date), l.verdict))
        .collect();

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut tn = 0usize;
    let mut flagged = Vec::new();
    for label in &labels {
        let actual = truth
            .get(&(label.id.clone(), label.date))
            .copied()
            .unwrap_or(Verdict::F);
        match (label.verdict, actual) {
            (Verdict::T, Verdict::T) => tp += 1,
            (Verdict::T, Verdict::F) => fp += 1,
            (Verdict::F, Verdict::T) => fn_ += 1,
            (Verdict::F, Verdict::F) => tn += 1,
        }
        if label.verdict == Verdict::T {
            flagged.push(serde_json::json!({
                "disk": label.id.to_string(),
                "date": label.date.to_string(),
                "truth": actual.to_string(),
            }));
        }
    }
    let total = (tp + fp + fn_ + tn) as f64;
    let report = serde_json::json!({
        "k": k,
        "disk_days": total as usize,
        "confusion": { "tp": tp, "fp": fp, "fn": fn_, "tn": tn },
        "agreement": (tp + tn) as f64 / total,
        "injected_faults": cluster.faults.iter().map(|f| serde_json::json!({
            "disk": f.id.to_string(),
            "style": format!("{:?}", f.style),
            "onset": f.onset_day.to_string(),
        })).collect::<Vec<_>>(),
        "flagged": flagged,
    });
    Ok(serde_json::to_string_pretty(&report)?)
}

// ---------------------------------------------------------------------------
// Detector heatmap
// ---------------------------------------------------------------------------

fn detector_predictions(
    cluster: &GeneratedCluster,
    windows: &[DailyWindow],
    detector: &str,
    split: Date,
    seed: u64,
) -> Result<PredictionSet> {
    let train_rows: Vec<Vec<f64>> = windows
        .iter()
        .filter(|w| w.date <= split)
        .map(|w| extract_snapshot_features(w).map(|f| f.to_vec()))
        .collect::<Result<_>>()?;
    if train_rows.is_empty() {
        return Err(Error::EmptyInput("no training windows"));
    }
    let test_windows: Vec<&DailyWindow> = windows.iter().filter(|w| w.date > split).collect();
    let mut preds = PredictionSet::new(detector);
    match detector {
        "iforest" => {
            let model = train_isolation_forest(
                &train_rows,
                &IForestParams {
                    seed: derive_seed(seed, "demo/iforest"),
                    ..Default::default()
                },
            )?;
            for w in test_windows {
                let row = extract_snapshot_features(w)?.to_vec();
                preds.insert(w.id.clone(), w.date, iforest_score(&model, &row)?)?;
            }
        }
        "autoencoder" => {
            let model = train_autoencoder(
                &train_rows,
                &AeConfig {
                    epochs: 60,
                    optimizer: OptimizerConfig {
                        learning_rate: 5e-3,
                        ..OptimizerConfig::adam()
                    },
                    seed: derive_seed(seed, "demo/autoencoder"),
                    ..AeConfig::for_input_dim(8)
                },
            )?;
            let mut daily: BTreeMap<Date, BTreeMap<DiskId, f64>> = BTreeMap::new();
            for w in test_windows {
                let row = extract_snapshot_features(w)?.to_vec();
                daily
                    .entry(w.date)
                    .or_default()
                    .insert(w.id.clone(), model.reconstruction_error(&row)?);
            }
            for (date, fleet) in daily {
                for label in classify_by_mse(&fleet, 3.0, date)? {
                    preds.insert(label.id, label.date, label.score)?;
                }
            }
        }
        other => {
            return Err(Error::Config(format!(
                "demo detector must be iforest or autoencoder, got {other:?}"
            )));
        }
    }
    let _ = cluster;
    Ok(preds)
}

/// Full run (generate, train, score, sweep) rendered as a heatmap SVG.
fn heatmap_svg_inner(
    hosts: u32,
    days: u32,
    fault_fraction: f64,
    seed: u64,
    detector: &str,
    metric: &str,
) -> Result<String> {
    let spec = demo_spec(hosts, days, fault_fraction, seed)?;
    let cluster = generate_cluster(&spec)?;
    let windows = cluster_windows(&cluster)?;
    let split = split_day(&spec);
    let preds = detector_predictions(&cluster, &windows, detector, split, seed)?;
    let eval_date = spec.start_day.add_days(spec.n_days as i64 - 1);
    let grid = sweep_grid(
        &preds,
        &cluster.truth,
        eval_date,
        &DEFAULT_LOOKBACKS,
        &default_thresholds(),
    )?;
    let metric = match metric {
        "precision" => Metric::Precision,
        "recall" => Metric::Recall,
        other => {
            return Err(Error::Config(format!(
                "metric must be precision or recall, got {other:?}"
            )));
        }
    };
    Ok(emit_heatmap_svg(&grid, metric))
}

// ---------------------------------------------------------------------------
// wasm exports
// ---------------------------------------------------------------------------

fn to_js(result: Result<String>) -> std::result::Result<String, String> {
    result.map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn traces_svg(
    hosts: u32,
    days: u32,
    fault_fraction: f64,
    seed: u64,
) -> std::result::Result<String, String> {
    to_js(traces_svg_inner(hosts, days, fault_fraction, seed))
}

#[wasm_bindgen]
pub fn labeler_json(
    hosts: u32,
    days: u32,
    fault_fraction: f64,
    seed: u64,
    k: f64,
) -> std::result::Result<String, String> {
    to_js(labeler_json_inner(hosts, days, fault_fraction, seed, k))
}

#[wasm_bindgen]
pub fn heatmap_svg(
    hosts: u32,
    days: u32,
    fault_fraction: f64,
    seed: u64,
    detector: String,
    metric: String,
) -> std::result::Result<String, String> {
    to_js(heatmap_svg_inner(
        hosts,
        days,
        fault_fraction,
        seed,
        &detector,
        &metric,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_svg_is_wellformed_and_deterministic() {
        let a = traces_svg_inner(2, 6, 0.1, 9).unwrap();
        let b = traces_svg_inner(2, 6, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.matches("<polyline").count() >= 24);
    }

    #[test]
    fn labeler_json_reports_confusion() {
        let text = labeler_json_inner(2, 6, 0.1, 9, 3.0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["disk_days"], 24 * 6);
        assert!(v["agreement"].as_f64().unwrap() > 0.9);
        assert!(!v["injected_faults"].as_array().unwrap().is_empty());
    }

    #[test]
    fn heatmap_runs_for_both_detectors() {
        for detector in ["iforest", "autoencoder"] {
            let svg = heatmap_svg_inner(2, 6, 0.1, 9, detector, "precision").unwrap();
            assert!(svg.starts_with("<svg"), "{detector}");
        }
    }

    #[test]
    fn bad_knobs_are_config_errors() {
        assert!(heatmap_svg_inner(2, 6, 0.1, 9, "lstm", "precision").is_err());
        assert!(heatmap_svg_inner(2, 6, 0.1, 9, "iforest", "f1").is_err());
        assert!(traces_svg_inner(99, 6, 0.1, 9).is_err());
    }
}
