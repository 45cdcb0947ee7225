//! Decision trees: the shared building block of both forests.
//!
//! Classification trees split on Gini impurity, regression trees on
//! variance reduction. Candidate thresholds are midpoints of adjacent
//! sorted unique feature values; ties resolve to the first (feature,
//! threshold) encountered, so building is deterministic.

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// A tree node; splits send `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        /// Class-1 probability (classification) or mean target (regression).
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
}

/// Shared growth limits.
#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; None means all.
    pub feature_subsample: Option<usize>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Grows a classification tree (targets in {0,1}) by Gini impurity.
    pub fn fit_classification(
        data: &[Vec<f64>],
        targets: &[f64],
        indices: &[usize],
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Self {
        DecisionTree {
            root: grow(data, targets, indices, params, rng, 0, Criterion::Gini),
        }
    }

    /// Grows a regression tree by variance reduction.
    pub fn fit_regression(
        data: &[Vec<f64>],
        targets: &[f64],
        indices: &[usize],
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Self {
        DecisionTree {
            root: grow(data, targets, indices, params, rng, 0, Criterion::Variance),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Criterion {
    Gini,
    Variance,
}

fn mean(targets: &[f64], indices: &[usize]) -> f64 {
    indices.iter().map(|&i| targets[i]).sum::<f64>() / indices.len() as f64
}

/// Gini impurity for binary targets, or variance for regression.
fn impurity(targets: &[f64], indices: &[usize], criterion: Criterion) -> f64 {
    let m = mean(targets, indices);
    match criterion {
        Criterion::Gini => 2.0 * m * (1.0 - m),
        Criterion::Variance => {
            indices.iter().map(|&i| (targets[i] - m).powi(2)).sum::<f64>() / indices.len() as f64
        }
    }
}

fn grow(
    data: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    params: &TreeParams,
    rng: &mut Rng,
    depth: usize,
    criterion: Criterion,
) -> TreeNode {
    let leaf = || TreeNode::Leaf {
        value: mean(targets, indices),
    };
    if depth >= params.max_depth || indices.len() < 2 * params.min_leaf.max(1) {
        return leaf();
    }
    let first = targets[indices[0]];
    if indices.iter().all(|&i| targets[i] == first) {
        return leaf();
    }

    let n_features = data[0].len();
    let candidates: Vec<usize> = match params.feature_subsample {
        Some(k) if k < n_features => rng.sample_indices(n_features, k),
        _ => (0..n_features).collect(),
    };

    let parent = impurity(targets, indices, criterion);
    let mut best: Option<(f64, usize, f64)> = None; // (decrease, feature, threshold)
    for &feature in &candidates {
        let mut values: Vec<f64> = indices.iter().map(|&i| data[i][feature]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = 0.5 * (pair[0] + pair[1]);
            let (left, right): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| data[i][feature] <= threshold);
            if left.len() < params.min_leaf || right.len() < params.min_leaf {
                continue;
            }
            let frac_l = left.len() as f64 / indices.len() as f64;
            let child = frac_l * impurity(targets, &left, criterion)
                + (1.0 - frac_l) * impurity(targets, &right, criterion);
            let decrease = parent - child;
            if best.is_none_or(|(d, _, _)| decrease > d) {
                best = Some((decrease, feature, threshold));
            }
        }
    }

    match best {
        Some((decrease, feature, threshold)) if decrease > 1e-15 => {
            let (left, right): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| data[i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow(data, targets, &left, params, rng, depth + 1, criterion)),
                right: Box::new(grow(data, targets, &right, params, rng, depth + 1, criterion)),
            }
        }
        _ => leaf(),
    }
}
