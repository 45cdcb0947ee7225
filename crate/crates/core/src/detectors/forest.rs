//! Tree ensembles: bagged random forest and the gradient-boosted ranker.
//!
//! The ranker realizes the cost-sensitive pipeline's probability
//! estimator as first-order gradient boosting with logistic loss: each
//! round fits a regression tree to the negative gradient (residuals
//! y - sigmoid(F)) and probabilities come out of the logistic of the
//! accumulated scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiskId;
use crate::rng::Rng;

use super::tree::{DecisionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestKind {
    RandomForest,
    Gbdt,
}

/// A trained tree ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub kind: ForestKind,
    pub trees: Vec<DecisionTree>,
    /// Shrinkage; GBDT only (1.0 for random forests).
    pub learning_rate: f64,
    /// Log-odds prior; GBDT only (0.0 for random forests).
    pub base_score: f64,
    pub feature_names: Vec<String>,
    /// Per-round training log-loss recorded during boosting.
    pub train_loss: Vec<f64>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}

/// Random-forest training knobs.
#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features per split; None means sqrt(d).
    pub feature_subsample: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 1,
            feature_subsample: None,
            seed: 0,
        }
    }
}

/// Boosting knobs.
#[derive(Debug, Clone)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 50,
            learning_rate: 0.3,
            max_depth: 3,
            seed: 0,
        }
    }
}

fn feature_names_for(n: usize) -> Vec<String> {
    if n == crate::model::FEATURE_NAMES.len() {
        crate::model::FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("f{i}")).collect()
    }
}

fn check_training_input(data: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no training rows"));
    }
    if data.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} targets",
            data.len(),
            targets.len()
        )));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(Error::Contract("ragged feature rows".into()));
    }
    Ok(d)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Trains a bagged random forest on binary targets.
///
/// Each tree sees a bootstrap sample and per-split feature subsampling
/// (default sqrt of the feature count). Degenerate single-class data is
/// permitted: every tree collapses to the class leaf.
pub fn train_random_forest(
    data: &[Vec<f64>],
    targets: &[f64],
    params: &ForestParams,
) -> Result<ForestModel> {
    let d = check_training_input(data, targets)?;
    if data.len() < 2 {
        return Err(Error::Contract("random forest needs at least 2 rows".into()));
    }
    let per_split = params
        .feature_subsample
        .unwrap_or_else(|| (d as f64).sqrt().round().max(1.0) as usize);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        feature_subsample: Some(per_split.min(d)),
    };
    let root = Rng::new(params.seed).derive("random_forest");
    let n = data.len();
    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .map(|t| {
            let mut rng = root.derive(&format!("tree/{t}"));
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.next_below(n)).collect();
            DecisionTree::fit_classification(data, targets, &bootstrap, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        kind: ForestKind::RandomForest,
        trees,
        learning_rate: 1.0,
        base_score: 0.0,
        feature_names: feature_names_for(d),
        train_loss: Vec::new(),
    })
}

/// Trains the gradient-boosted ranker with logistic loss.
///
/// With zero rounds the model is the log-odds prior alone, so its
/// probability equals the base rate.
pub fn train_gbdt_ranker(
    data: &[Vec<f64>],
    targets: &[f64],
    params: &GbdtParams,
) -> Result<ForestModel> {
    let d = check_training_input(data, targets)?;
    if !(0.0..=1.0).contains(&params.learning_rate) || params.learning_rate == 0.0 {
        return Err(Error::Config(format!(
            "gbdt learning_rate {} outside (0,1]",
            params.learning_rate
        )));
    }
    let n = data.len();
    let pos_rate = (targets.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (pos_rate / (1.0 - pos_rate)).ln();

    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: 1,
        feature_subsample: None, // no column sampling in this realization
    };
    let indices: Vec<usize> = (0..n).collect();
    let root = Rng::new(params.seed).derive("gbdt");
    let mut scores = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut train_loss = Vec::with_capacity(params.n_rounds + 1);
    train_loss.push(log_loss(&scores, targets));
    for round in 0..params.n_rounds {
        let residuals: Vec<f64> = scores
            .iter()
            .zip(targets)
            .map(|(&f, &y)| y - sigmoid(f))
            .collect();
        let mut rng = root.derive(&format!("round/{round}"));
        let tree = DecisionTree::fit_regression(data, &residuals, &indices, &tree_params, &mut rng);
        for (i, row) in data.iter().enumerate() {
            scores[i] += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        train_loss.push(log_loss(&scores, targets));
    }
    Ok(ForestModel {
        kind: ForestKind::Gbdt,
        trees,
        learning_rate: params.learning_rate,
        base_score,
        feature_names: feature_names_for(d),
        train_loss,
    })
}

fn log_loss(scores: &[f64], targets: &[f64]) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &y)| {
            let p = sigmoid(f).clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Fault probability for one feature row, in `[0,1]`.
///
/// Random forests report the fraction of trees voting class 1 (a tree
/// votes 1 when its leaf probability is at least 0.5); GBDT reports the
/// logistic of the summed leaf scores.
pub fn predict_forest(model: &ForestModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features() {
        return Err(Error::Shape {
            op: "predict_forest",
            lhs: (1, x.len()),
            rhs: (1, model.n_features()),
        });
    }
    match model.kind {
        ForestKind::RandomForest => {
            if model.trees.is_empty() {
                return Err(Error::EmptyInput("forest has no trees"));
            }
            let votes = model
                .trees
                .iter()
                .filter(|t| t.predict(x) >= 0.5)
                .count();
            Ok(votes as f64 / model.trees.len() as f64)
        }
        ForestKind::Gbdt => {
            let sum: f64 = model
                .trees
                .iter()
                .map(|t| model.learning_rate * t.predict(x))
                .sum();
            Ok(sigmoid(model.base_score + sum))
        }
    }
}

/// Ranks disks by fault probability, descending; ties break by
/// lexicographic DiskId order.
pub fn rank_disks(
    model: &ForestModel,
    features_per_disk: &[(DiskId, Vec<f64>)],
) -> Result<Vec<(DiskId, f64)>> {
    let mut ranked: Vec<(DiskId, f64)> = features_per_disk
        .iter()
        .map(|(id, x)| predict_forest(model, x).map(|p| (id.clone(), p)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(ranked)
}
