//! Margin-based detection: linear SVM trained by primal subgradient
//! descent (Pegasos-style) on hinge loss with L2 regularization of
//! strength 1/C. Features are standardized internally and the scaler is
//! stored in the model, so callers always predict in raw feature space.
//! An RBF path exists behind the kernel config; the linear path is the
//! required one and the only one with feature importances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvmKernel {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: SvmKernel,
    /// Regularization parameter; larger C = softer regularization.
    pub c: f64,
    /// RBF width; only the Rbf path reads it.
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: SvmKernel::Linear,
            c: 1.0,
            gamma: 0.5,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Per-feature standardization fitted on the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Scaler {
    fn fit(data: &[Vec<f64>]) -> Scaler {
        let d = data[0].len();
        let n = data.len() as f64;
        let mut means = vec![0.0; d];
        for row in data {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut stds = vec![0.0; d];
        for row in data {
            for j in 0..d {
                stds[j] += (row[j] - means[j]).powi(2) / n;
            }
        }
        for s in &mut stds {
            *s = s.sqrt();
            if *s == 0.0 {
                *s = 1.0; // constant feature: pass through unscaled
            }
        }
        Scaler { means, stds }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmConfig,
    pub scaler: Scaler,
    pub feature_names: Vec<String>,
    /// Linear path: weights in standardized space.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Rbf path: dual coefficients alpha_i * y_i and their points,
    /// in standardized space.
    pub support_coefficients: Vec<f64>,
    pub support_vectors: Vec<Vec<f64>>,
}

impl SvmModel {
    /// Signed distance-like decision value; positive predicts +1.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.scaler.means.len() {
            return Err(Error::Shape {
                op: "svm decision_value",
                lhs: (1, x.len()),
                rhs: (1, self.scaler.means.len()),
            });
        }
        let z = self.scaler.apply(x);
        match self.config.kernel {
            SvmKernel::Linear => {
                Ok(dot(&self.weights, &z) + self.bias)
            }
            SvmKernel::Rbf => {
                let mut sum = self.bias;
                for (coef, sv) in self.support_coefficients.iter().zip(&self.support_vectors) {
                    sum += coef * rbf(sv, &z, self.config.gamma);
                }
                Ok(sum)
            }
        }
    }

    /// Predicted class in {-1, +1}.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision_value(x)? >= 0.0 { 1.0 } else { -1.0 })
    }

    /// Decision value squashed to a `[0,1]` score for the benchmark.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 / (1.0 + (-self.decision_value(x)?).exp()))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Trains an SVM on labels in {-1, +1}.
pub fn train_svm(data: &[Vec<f64>], labels: &[f64], config: &SvmConfig) -> Result<SvmModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no rows for svm"));
    }
    if data.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} labels",
            data.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::Contract("svm labels must be -1 or +1".into()));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateTraining(
            "svm training requires both classes".into(),
        ));
    }
    if config.c <= 0.0 {
        return Err(Error::Config("svm C must be positive".into()));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("ragged feature rows".into()));
    }

    let scaler = Scaler::fit(data);
    let scaled: Vec<Vec<f64>> = data.iter().map(|r| scaler.apply(r)).collect();
    let feature_names = if d == crate::model::FEATURE_NAMES.len() {
        crate::model::FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..d).map(|i| format!("f{i}")).collect()
    };

    match config.kernel {
        SvmKernel::Linear => {
            let (weights, bias) = pegasos_linear(&scaled, labels, config);
            Ok(SvmModel {
                config: config.clone(),
                scaler,
                feature_names,
                weights,
                bias,
                support_coefficients: Vec::new(),
                support_vectors: Vec::new(),
            })
        }
        SvmKernel::Rbf => {
            let (coefs, bias) = kernel_pegasos(&scaled, labels, config);
            // Keep only points that ever violated the margin.
            let mut support_coefficients = Vec::new();
            let mut support_vectors = Vec::new();
            for (i, &c) in coefs.iter().enumerate() {
                if c != 0.0 {
                    support_coefficients.push(c);
                    support_vectors.push(scaled[i].clone());
                }
            }
            Ok(SvmModel {
                config: config.clone(),
                scaler,
                feature_names,
                weights: Vec::new(),
                bias,
                support_coefficients,
                support_vectors,
            })
        }
    }
}

/// Pegasos subgradient descent on the primal objective
/// (1/(2C))|w|^2 + mean hinge. Deterministic given the seed.
fn pegasos_linear(data: &[Vec<f64>], labels: &[f64], config: &SvmConfig) -> (Vec<f64>, f64) {
    let n = data.len();
    let d = data[0].len();
    let lambda = 1.0 / config.c;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut rng = Rng::new(config.seed).derive("svm");
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let margin = labels[i] * (dot(&w, &data[i]) + b);
            for wv in w.iter_mut() {
                *wv *= 1.0 - eta * lambda;
            }
            if margin < 1.0 {
                for (wv, &xv) in w.iter_mut().zip(&data[i]) {
                    *wv += eta * labels[i] * xv;
                }
                b += eta * labels[i];
            }
        }
    }
    (w, b)
}

/// Kernelized Pegasos for the optional RBF path (standard bias-free
/// formulation: alphas count margin violations).
fn kernel_pegasos(data: &[Vec<f64>], labels: &[f64], config: &SvmConfig) -> (Vec<f64>, f64) {
    let n = data.len();
    let lambda = 1.0 / config.c;
    let mut alpha = vec![0u64; n]; // violation counts
    let mut rng = Rng::new(config.seed).derive("svm-rbf");
    let mut order: Vec<usize> = (0..n).collect();
    let mut t: u64 = 0;
    for _ in 0..config.epochs {
        rng.shuffle(&mut order);
        for &i in &order {
            t += 1;
            let f: f64 = (0..n)
                .filter(|&j| alpha[j] > 0)
                .map(|j| {
                    alpha[j] as f64 * labels[j] * rbf(&data[j], &data[i], config.gamma)
                        / (lambda * t as f64)
                })
                .sum::<f64>();
            if labels[i] * f < 1.0 {
                alpha[i] += 1;
            }
        }
    }
    let coefs: Vec<f64> = (0..n)
        .map(|j| alpha[j] as f64 * labels[j] / (lambda * t as f64))
        .collect();
    (coefs, 0.0)
}

/// Features ranked by absolute standardized weight, descending;
/// ties break by feature name. Linear models only.
pub fn svm_feature_importance(model: &SvmModel) -> Result<Vec<(String, f64)>> {
    if model.config.kernel != SvmKernel::Linear {
        return Err(Error::UnsupportedForKernel("Rbf".into()));
    }
    let mut ranked: Vec<(String, f64)> = model
        .feature_names
        .iter()
        .cloned()
        .zip(model.weights.iter().map(|w| w.abs()))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// K-fold cross-validation with deterministic fold assignment.
///
/// Folds are seeded-shuffle chunks whose sizes differ by at most one.
/// `train_fn` fits on the training rows, `metric` evaluates on the
/// held-out rows; returns the k per-fold metric values.
pub fn cross_validate<M>(
    data: &[Vec<f64>],
    labels: &[f64],
    k: usize,
    seed: u64,
    train_fn: impl Fn(&[Vec<f64>], &[f64]) -> Result<M>,
    metric: impl Fn(&M, &[Vec<f64>], &[f64]) -> f64,
) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Config("cross-validation needs k >= 2".into()));
    }
    if k > data.len() {
        return Err(Error::InvalidFolds { k, n: data.len() });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    Rng::new(seed).derive("cv").shuffle(&mut order);

    let folds = fold_slices(&order, k);
    let mut scores = Vec::with_capacity(k);
    for test_idx in &folds {
        let test_set: std::collections::BTreeSet<usize> = test_idx.iter().copied().collect();
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        for &i in &order {
            if !test_set.contains(&i) {
                train_x.push(data[i].clone());
                train_y.push(labels[i]);
            }
        }
        let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let test_y: Vec<f64> = test_idx.iter().map(|&i| labels[i]).collect();
        let model = train_fn(&train_x, &train_y)?;
        scores.push(metric(&model, &test_x, &test_y));
    }
    Ok(scores)
}

/// Splits shuffled indices into k folds with sizes differing by <= 1.
fn fold_slices(order: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = order.len();
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[at..at + size].to_vec());
        at += size;
    }
    folds
}
