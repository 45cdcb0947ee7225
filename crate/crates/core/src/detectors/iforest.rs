//! Isolation forest anomaly detection.
//!
//! Each isolation tree is built on a uniform subsample: pick a random
//! feature with spread, split uniformly between its min and max, recurse
//! until isolation or the depth cap ceil(log2 subsample). A point's
//! anomaly score is `2^(-E[h] / c(n))` where `E[h]` is its average path
//! length over the forest and `c(n)` the expected unsuccessful-search
//! path length of a binary search tree of n points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Euler-Mascheroni constant, per the harmonic-number estimate
/// H(i) = ln(i) + gamma.
pub const EULER_GAMMA: f64 = 0.5772156649;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ITreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<ITreeNode>,
        right: Box<ITreeNode>,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IForestModel {
    pub trees: Vec<ITreeNode>,
    /// Rows actually used per tree (<= requested subsample).
    pub subsample: usize,
    pub n_features: usize,
}

#[derive(Debug, Clone)]
pub struct IForestParams {
    pub n_trees: usize,
    pub subsample: usize,
    pub seed: u64,
}

impl Default for IForestParams {
    fn default() -> Self {
        IForestParams {
            n_trees: 100,
            subsample: 256,
            seed: 0,
        }
    }
}

/// Average unsuccessful-search path length in a BST of n points:
/// c(n) = 2 H(n-1) - 2(n-1)/n, with H(i) = ln(i) + gamma; 0 for n <= 1.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    2.0 * ((nf - 1.0).ln() + EULER_GAMMA) - 2.0 * (nf - 1.0) / nf
}

/// The score law `s = 2^(-e_h / c(n))`, exposed so the fixed point
/// `E[h] = c(n)` -> 0.5 can be checked directly.
pub fn score_from_path_length(e_h: f64, n: usize) -> f64 {
    2f64.powf(-e_h / average_path_length(n))
}

/// Fits an isolation forest. The effective subsample is
/// min(params.subsample, |data|), drawn without replacement per tree.
pub fn train_isolation_forest(data: &[Vec<f64>], params: &IForestParams) -> Result<IForestModel> {
    if data.is_empty() {
        return Err(Error::EmptyInput("no rows for isolation forest"));
    }
    if data.len() < 2 {
        return Err(Error::Contract("isolation forest needs at least 2 rows".into()));
    }
    let n_features = data[0].len();
    if n_features == 0 || data.iter().any(|r| r.len() != n_features) {
        return Err(Error::Contract("ragged feature rows".into()));
    }
    let subsample = params.subsample.min(data.len()).max(2);
    let depth_cap = (subsample as f64).log2().ceil() as usize;
    let root = Rng::new(params.seed).derive("iforest");
    let trees: Vec<ITreeNode> = (0..params.n_trees)
        .map(|t| {
            let mut rng = root.derive(&format!("tree/{t}"));
            let rows = rng.sample_indices(data.len(), subsample);
            grow(data, &rows, 0, depth_cap, &mut rng)
        })
        .collect();
    Ok(IForestModel {
        trees,
        subsample,
        n_features,
    })
}

fn grow(data: &[Vec<f64>], rows: &[usize], depth: usize, cap: usize, rng: &mut Rng) -> ITreeNode {
    if rows.len() <= 1 || depth >= cap {
        return ITreeNode::Leaf { size: rows.len() };
    }
    let n_features = data[rows[0]].len();
    // Random feature with spread; fall back to a leaf if all are constant.
    let offset = rng.next_below(n_features);
    let mut chosen = None;
    for probe in 0..n_features {
        let feature = (offset + probe) % n_features;
        let min = rows.iter().map(|&i| data[i][feature]).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|&i| data[i][feature]).fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            chosen = Some((feature, min, max));
            break;
        }
    }
    let Some((feature, min, max)) = chosen else {
        return ITreeNode::Leaf { size: rows.len() };
    };
    let threshold = rng.uniform(min, max);
    let (left, right): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| data[i][feature] < threshold);
    if left.is_empty() || right.is_empty() {
        return ITreeNode::Leaf { size: rows.len() };
    }
    ITreeNode::Split {
        feature,
        threshold,
        left: Box::new(grow(data, &left, depth + 1, cap, rng)),
        right: Box::new(grow(data, &right, depth + 1, cap, rng)),
    }
}

/// Path length of a point in one tree, with the harmonic estimate
/// c(size) added at unsplit leaves.
fn path_length(node: &ITreeNode, x: &[f64]) -> f64 {
    let mut depth = 0.0;
    let mut node = node;
    loop {
        match node {
            ITreeNode::Leaf { size } => return depth + average_path_length(*size),
            ITreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                depth += 1.0;
                node = if x[*feature] < *threshold { left } else { right };
            }
        }
    }
}

/// Anomaly score in (0,1); higher means more anomalous.
pub fn iforest_score(model: &IForestModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features {
        return Err(Error::Shape {
            op: "iforest_score",
            lhs: (1, x.len()),
            rhs: (1, model.n_features),
        });
    }
    if model.trees.is_empty() {
        return Err(Error::EmptyInput("isolation forest has no trees"));
    }
    let e_h =
        model.trees.iter().map(|t| path_length(t, x)).sum::<f64>() / model.trees.len() as f64;
    Ok(score_from_path_length(e_h, model.subsample))
}

/// Average path length of a point over the forest (diagnostics).
pub fn mean_path_length(model: &IForestModel, x: &[f64]) -> f64 {
    model.trees.iter().map(|t| path_length(t, x)).sum::<f64>() / model.trees.len() as f64
}

fn tree_max_depth(node: &ITreeNode) -> usize {
    match node {
        ITreeNode::Leaf { .. } => 0,
        ITreeNode::Split { left, right, .. } => 1 + tree_max_depth(left).max(tree_max_depth(right)),
    }
}

impl IForestModel {
    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(tree_max_depth).max().unwrap_or(0)
    }
}
