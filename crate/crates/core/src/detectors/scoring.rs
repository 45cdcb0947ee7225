//! Forecast-error scoring: per-disk MSE and 3-sigma MSE classification.

use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::labeling::compute_sigma_threshold;
use crate::model::{Date, DiskId, FaultLabel, Verdict};

use super::sequence::SequenceDataset;

/// Anything that predicts the next scaled step from a (W, F) window.
pub trait ForecastModel {
    fn predict_next(&self, input: &Tensor) -> Result<Vec<f64>>;

    /// Batched prediction from timestep-major steps (each (B, F));
    /// returns (B, F) predictions. The default loops over rows;
    /// models with batch-aware forwards override it.
    fn predict_batch(&self, steps: &[Tensor]) -> Result<Tensor> {
        let (batch, features) = steps[0].shape();
        let mut out = Tensor::zeros(batch, features);
        for row in 0..batch {
            let mut window = Tensor::zeros(steps.len(), features);
            for (t, step) in steps.iter().enumerate() {
                for c in 0..features {
                    window.set(t, c, step.get(row, c));
                }
            }
            for (c, v) in self.predict_next(&window)?.into_iter().enumerate() {
                out.set(row, c, v);
            }
        }
        Ok(out)
    }
}

fn squared_error(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

const FORECAST_BATCH: usize = 256;

/// Per-pair squared errors for a set of (disk, index) pairs, batched.
fn batched_errors<M: ForecastModel + ?Sized>(
    model: &M,
    dataset: &SequenceDataset,
    disk: &DiskId,
    pairs: &[usize],
) -> Result<Vec<f64>> {
    let mut errors = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(FORECAST_BATCH) {
        let refs: Vec<(DiskId, usize)> = chunk.iter().map(|&i| (disk.clone(), i)).collect();
        let (steps, targets) = dataset.batch(&refs)?;
        let preds = model.predict_batch(&steps)?;
        let (rows, cols) = targets.shape();
        for r in 0..rows {
            let p: Vec<f64> = (0..cols).map(|c| preds.get(r, c)).collect();
            let t: Vec<f64> = (0..cols).map(|c| targets.get(r, c)).collect();
            errors.push(squared_error(&p, &t));
        }
    }
    Ok(errors)
}

/// Mean squared prediction error over one disk's test windows, in
/// scaled space.
pub fn forecast_mse<M: ForecastModel + ?Sized>(
    model: &M,
    dataset: &SequenceDataset,
    disk: &DiskId,
) -> Result<f64> {
    let series = dataset.series(disk)?;
    if series.test_pairs.is_empty() {
        return Err(Error::EmptyInput("disk has no test windows"));
    }
    let errors = batched_errors(model, dataset, disk, &series.test_pairs)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Per-day forecast MSE over one disk's test windows; feeds the daily
/// prediction pipeline.
pub fn forecast_mse_by_day<M: ForecastModel + ?Sized>(
    model: &M,
    dataset: &SequenceDataset,
    disk: &DiskId,
) -> Result<BTreeMap<Date, f64>> {
    let series = dataset.series(disk)?;
    let errors = batched_errors(model, dataset, disk, &series.test_pairs)?;
    let mut sums: BTreeMap<Date, (f64, usize)> = BTreeMap::new();
    for (&i, err) in series.test_pairs.iter().zip(errors) {
        let entry = sums.entry(dataset.target_date(disk, i)?).or_insert((0.0, 0));
        entry.0 += err;
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(d, (sum, n))| (d, sum / n as f64))
        .collect())
}

/// Classifies disks by fleet-level 3-sigma thresholding of their MSEs.
///
/// Verdict is `T` iff the disk's MSE strictly exceeds mean + k*std over
/// the fleet. The score is `min(1, mse / threshold * 0.5)`: monotone in
/// MSE and exactly 0.5 at the threshold, so sweeping the benchmark's
/// score threshold at 0.5 reproduces the hard T/F rule. A degenerate
/// threshold of zero scores positive MSEs 1 and zero MSEs 0.
pub fn classify_by_mse(
    mses: &BTreeMap<DiskId, f64>,
    k: f64,
    date: Date,
) -> Result<Vec<FaultLabel>> {
    if mses.is_empty() {
        return Err(Error::EmptyInput("no per-disk MSEs to classify"));
    }
    let values: Vec<f64> = mses.values().copied().collect();
    let sigma = compute_sigma_threshold(&values, k)?;
    let threshold = sigma.threshold;
    Ok(mses
        .iter()
        .map(|(id, &mse)| {
            let score = if threshold > 0.0 {
                (0.5 * mse / threshold).min(1.0)
            } else if mse > 0.0 {
                1.0
            } else {
                0.0
            };
            FaultLabel {
                id: id.clone(),
                date,
                verdict: if mse > threshold { Verdict::T } else { Verdict::F },
                score,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::sequence::{build_sequences, SeqFeatures};
    use crate::model::{DailyWindow, Sample, DAY_SECONDS};

    fn disk(n: u8) -> DiskId {
        DiskId::new('A', "h000", n).unwrap()
    }

    /// Predicts a constant for every window.
    struct ConstantModel(f64);

    impl ForecastModel for ConstantModel {
        fn predict_next(&self, input: &Tensor) -> Result<Vec<f64>> {
            Ok(vec![self.0; input.cols()])
        }
    }

    fn two_day_dataset(test_lats: &[f64]) -> SequenceDataset {
        let mk = |day: i64, lats: &[f64]| {
            let samples: Vec<Sample> = lats
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    Sample::new(day * DAY_SECONDS + 21 * 3600 + i as i64 * 15, l, 100.0).unwrap()
                })
                .collect();
            DailyWindow::new(disk(0), Date::from_days(day), samples).unwrap()
        };
        let windows = vec![mk(1, &[0.0, 1.0, 2.0, 4.0]), mk(2, test_lats)];
        build_sequences(&windows, Date::from_days(1), 2, SeqFeatures::LatencyOnly).unwrap()
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        // Constant test series predicted by the same constant.
        let ds = two_day_dataset(&[4.0, 4.0, 4.0]);
        let model = ConstantModel(1.0); // 4.0 scales to 1.0 (train max 4)
        let mse = forecast_mse(&model, &ds, &disk(0)).unwrap();
        assert!(mse < 1e-24, "mse {mse}");
    }

    // Arithmetic oracle: constant-zero predictor -> mean of squared
    // scaled targets.
    #[test]
    fn zero_predictor_gives_mean_square_target() {
        let ds = two_day_dataset(&[2.0, 4.0, 0.0]);
        let model = ConstantModel(0.0);
        let mse = forecast_mse(&model, &ds, &disk(0)).unwrap();
        let series = ds.series(&disk(0)).unwrap();
        let expected: f64 = series
            .test_pairs
            .iter()
            .map(|&i| {
                let t = ds.target(&disk(0), i).unwrap()[0];
                t * t
            })
            .sum::<f64>()
            / series.test_pairs.len() as f64;
        assert!((mse - expected).abs() < 1e-12);
        assert!(mse >= 0.0);
    }

    #[test]
    fn unknown_disk_errors() {
        let ds = two_day_dataset(&[1.0, 1.0, 1.0]);
        assert!(matches!(
            forecast_mse(&ConstantModel(0.0), &ds, &disk(7)),
            Err(Error::UnknownDisk(_))
        ));
    }

    #[test]
    fn daily_mse_covers_test_days_only() {
        let ds = two_day_dataset(&[2.0, 4.0, 0.0]);
        let by_day = forecast_mse_by_day(&ConstantModel(0.0), &ds, &disk(0)).unwrap();
        assert_eq!(by_day.len(), 1);
        assert!(by_day.contains_key(&Date::from_days(2)));
    }

    #[test]
    fn all_equal_mses_all_f() {
        let mses: BTreeMap<DiskId, f64> =
            (0..5).map(|n| (disk(n), 0.25)).collect();
        let labels = classify_by_mse(&mses, 3.0, Date::from_days(9)).unwrap();
        assert!(labels.iter().all(|l| l.verdict == Verdict::F));
        assert!(labels.iter().all(|l| (l.score - 0.5).abs() < 1e-12));
    }

    // 3-sigma arithmetic: one disk at 100x the fleet MSE is flagged.
    #[test]
    fn extreme_outlier_is_t() {
        let mut mses: BTreeMap<DiskId, f64> = (0..11).map(|n| (disk(n), 0.01)).collect();
        mses.insert(disk(11), 1.0);
        let labels = classify_by_mse(&mses, 3.0, Date::from_days(9)).unwrap();
        for l in &labels {
            if l.id == disk(11) {
                assert_eq!(l.verdict, Verdict::T);
                assert!(l.score > 0.5);
            } else {
                assert_eq!(l.verdict, Verdict::F);
            }
        }
    }

    // Scale invariance of verdicts and scores.
    #[test]
    fn rescaling_preserves_verdicts_and_scores() {
        let mut mses: BTreeMap<DiskId, f64> = (0..6).map(|n| (disk(n), 0.1 + 0.05 * n as f64)).collect();
        mses.insert(disk(7), 3.0);
        let base = classify_by_mse(&mses, 3.0, Date::from_days(1)).unwrap();
        for scale in [1e-6, 0.5, 1000.0] {
            let scaled: BTreeMap<DiskId, f64> =
                mses.iter().map(|(k, v)| (k.clone(), v * scale)).collect();
            let out = classify_by_mse(&scaled, 3.0, Date::from_days(1)).unwrap();
            for (a, b) in base.iter().zip(&out) {
                assert_eq!(a.verdict, b.verdict, "scale {scale}");
                assert!((a.score - b.score).abs() < 1e-9, "scale {scale}");
            }
        }
    }

    #[test]
    fn empty_mses_error() {
        let mses: BTreeMap<DiskId, f64> = BTreeMap::new();
        assert!(matches!(
            classify_by_mse(&mses, 3.0, Date::from_days(1)),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn all_zero_mses_all_f_with_zero_scores() {
        let mses: BTreeMap<DiskId, f64> = (0..4).map(|n| (disk(n), 0.0)).collect();
        let labels = classify_by_mse(&mses, 3.0, Date::from_days(1)).unwrap();
        assert!(labels.iter().all(|l| l.verdict == Verdict::F && l.score == 0.0));
    }
}
