//! Gradient-boosted regression trees: depth-limited variance-reduction
//! trees fit sequentially to residuals, damped by a learning rate.

use super::{check_rows, ModelError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Total squared-error reduction achieved by this split.
        gain: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree stored as a node arena; the root is the
/// last node pushed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl RegressionTree {
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if x_row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn depth_at(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + depth_at(nodes, *left).max(depth_at(nodes, *right))
                }
            }
        }
        depth_at(&self.nodes, self.root)
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best variance-reduction split over midpoint thresholds. Equal-gain ties
/// break toward the lower feature index, then the lower threshold (the
/// scan order, with strict improvement required).
fn best_split(
    x: &[Vec<f64>],
    residuals: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = indices.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let total_sum: f64 = indices.iter().map(|&i| residuals[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;

    let n_features = x[0].len();
    let mut best: Option<SplitCandidate> = None;
    let mut sorted = indices.to_vec();
    for feature in 0..n_features {
        sorted.sort_by(|a, b| {
            x[*a][feature]
                .partial_cmp(&x[*b][feature])
                .unwrap()
                .then(a.cmp(b))
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for pos in 0..n - 1 {
            let i = sorted[pos];
            let r = residuals[i];
            left_sum += r;
            left_sq += r * r;
            let left_n = pos + 1;
            let right_n = n - left_n;
            let value = x[i][feature];
            let next = x[sorted[pos + 1]][feature];
            if next <= value {
                continue; // not a boundary between distinct values
            }
            if left_n < min_leaf || right_n < min_leaf {
                continue;
            }
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let left_sse = left_sq - left_sum * left_sum / left_n as f64;
            let right_sse = right_sq - right_sum * right_sum / right_n as f64;
            let gain = parent_sse - left_sse - right_sse;
            if gain > 0.0 && best.as_ref().map(|b| gain > b.gain).unwrap_or(true) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: 0.5 * (value + next),
                    gain,
                });
            }
        }
    }
    best
}

fn build_tree(
    x: &[Vec<f64>],
    residuals: &[f64],
    indices: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let mean = indices.iter().map(|&i| residuals[i]).sum::<f64>() / indices.len() as f64;
    if depth >= max_depth {
        nodes.push(TreeNode::Leaf { value: mean });
        return nodes.len() - 1;
    }
    match best_split(x, residuals, &indices, min_leaf) {
        None => {
            nodes.push(TreeNode::Leaf { value: mean });
            nodes.len() - 1
        }
        Some(split) => {
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                .into_iter()
                .partition(|&i| x[i][split.feature] <= split.threshold);
            let left = build_tree(x, residuals, left_idx, depth + 1, max_depth, min_leaf, nodes);
            let right =
                build_tree(x, residuals, right_idx, depth + 1, max_depth, min_leaf, nodes);
            nodes.push(TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                gain: split.gain,
                left,
                right,
            });
            nodes.len() - 1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    /// Training-target mean; the boosting start point.
    pub base_value: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    /// Training MSE after each boosting round.
    pub train_mse_trace: Vec<f64>,
}

/// Sequentially fits depth-limited trees to residuals; predictions update
/// by +learning_rate * tree(x) each round.
pub fn gbt_fit(
    x: &[Vec<f64>],
    y: &[f64],
    n_estimators: usize,
    max_depth: usize,
    learning_rate: f64,
    min_leaf: usize,
    seed: u64,
) -> Result<GbtEnsemble, ModelError> {
    check_rows(x, y)?;
    if !(0.0..=1.0).contains(&learning_rate) || learning_rate == 0.0 {
        return Err(ModelError::BadParam(
            "learning_rate must be in (0, 1]".to_string(),
        ));
    }
    let n = y.len();
    let base_value = y.iter().sum::<f64>() / n as f64;
    let mut preds = vec![base_value; n];
    let mut trees = Vec::with_capacity(n_estimators);
    let mut trace = Vec::with_capacity(n_estimators);
    let all_indices: Vec<usize> = (0..n).collect();
    for _ in 0..n_estimators {
        let residuals: Vec<f64> = y.iter().zip(&preds).map(|(a, b)| a - b).collect();
        let mut nodes = Vec::new();
        let root = build_tree(
            x,
            &residuals,
            all_indices.clone(),
            0,
            max_depth,
            min_leaf,
            &mut nodes,
        );
        let tree = RegressionTree { nodes, root };
        for (i, row) in x.iter().enumerate() {
            preds[i] += learning_rate * tree.predict(row);
        }
        trace.push(
            y.iter()
                .zip(&preds)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n as f64,
        );
        trees.push(tree);
    }
    Ok(GbtEnsemble {
        base_value,
        trees,
        learning_rate,
        max_depth,
        min_leaf,
        seed,
        train_mse_trace: trace,
    })
}

/// base + learning_rate * sum of tree outputs; constant in training size.
pub fn gbt_predict(ensemble: &GbtEnsemble, x_row: &[f64]) -> Result<f64, ModelError> {
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let TreeNode::Split { feature, .. } = node {
                if *feature >= x_row.len() {
                    return Err(ModelError::DimensionMismatch {
                        expected: feature + 1,
                        got: x_row.len(),
                    });
                }
            }
        }
    }
    Ok(ensemble.base_value
        + ensemble.learning_rate
            * ensemble
                .trees
                .iter()
                .map(|t| t.predict(x_row))
                .sum::<f64>())
}

/// Total variance reduction attributed to splits on each feature,
/// normalized to sum 1. An ensemble with zero splits yields the all-zero
/// vector.
pub fn gbt_feature_importance(ensemble: &GbtEnsemble, n_features: usize) -> Vec<f64> {
    let mut importance = vec![0.0; n_features];
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let TreeNode::Split { feature, gain, .. } = node {
                importance[*feature] += gain;
            }
        }
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        for v in importance.iter_mut() {
            *v /= total;
        }
    }
    importance
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_estimators_predicts_the_mean() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let m = gbt_fit(&x, &y, 0, 3, 0.1, 1, 0).unwrap();
        assert_eq!(gbt_predict(&m, &[99.0]).unwrap(), 3.0);
    }

    #[test]
    fn depth_zero_single_tree_still_predicts_mean() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let m = gbt_fit(&x, &y, 1, 0, 1.0, 1, 0).unwrap();
        assert_eq!(gbt_predict(&m, &[2.0]).unwrap(), 3.0);
    }

    #[test]
    fn single_depth1_tree_fits_a_step_function() {
        // y = 1[x > 0] on x in {-1, 1}; hand oracle: the only boundary is
        // between -1 and 1, threshold 0, left mean 0, right mean 1.
        let x = vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let m = gbt_fit(&x, &y, 1, 1, 1.0, 1, 0).unwrap();
        assert_eq!(gbt_predict(&m, &[-1.0]).unwrap(), 0.0);
        assert_eq!(gbt_predict(&m, &[1.0]).unwrap(), 1.0);
        assert!(m.train_mse_trace[0] < 1e-24);
        match &m.trees[0].nodes[m.trees[0].root] {
            TreeNode::Split { threshold, feature, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.0);
            }
            other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn training_mse_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|r| r[0] * r[1] + r[2].sin() + rng.random_range(-0.1..0.1))
            .collect();
        let m = gbt_fit(&x, &y, 100, 3, 0.1, 5, 0).unwrap();
        for w in m.train_mse_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "MSE increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn trees_respect_depth_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 3.0 + r[1] * r[2]).collect();
        let m = gbt_fit(&x, &y, 10, 3, 0.5, 2, 0).unwrap();
        for tree in &m.trees {
            assert!(tree.depth() <= 3);
        }
    }

    #[test]
    fn prediction_matches_independent_tree_walk() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] - 2.0 * r[1] + r[2] * r[0]).collect();
        let m = gbt_fit(&x, &y, 30, 3, 0.1, 2, 0).unwrap();

        // Independent evaluator: re-walk each tree recursively.
        fn walk(nodes: &[TreeNode], i: usize, row: &[f64]) -> f64 {
            match &nodes[i] {
                TreeNode::Leaf { value } => *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if row[*feature] <= *threshold {
                        walk(nodes, *left, row)
                    } else {
                        walk(nodes, *right, row)
                    }
                }
            }
        }
        for row in x.iter().take(50) {
            let oracle = m.base_value
                + m.learning_rate
                    * m.trees
                        .iter()
                        .map(|t| walk(&t.nodes, t.root, row))
                        .sum::<f64>();
            assert_eq!(gbt_predict(&m, row).unwrap(), oracle);
        }
    }

    #[test]
    fn importance_concentrates_on_signal_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        // Feature 2 is pure noise.
        let y: Vec<f64> = x
            .iter()
            .map(|r| 5.0 * r[0] + 2.0 * r[1] + rng.random_range(-0.05..0.05))
            .collect();
        let m = gbt_fit(&x, &y, 50, 3, 0.1, 5, 0).unwrap();
        let imp = gbt_feature_importance(&m, 3);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[2] < 0.05, "noise importance {}", imp[2]);
        assert!(imp[0] > imp[1]);
    }

    #[test]
    fn single_split_tree_has_unit_importance() {
        let x = vec![vec![0.0, -1.0], vec![0.0, 1.0], vec![0.0, -1.0], vec![0.0, 1.0]];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let m = gbt_fit(&x, &y, 1, 1, 1.0, 1, 0).unwrap();
        assert_eq!(gbt_feature_importance(&m, 2), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_split_ensemble_importance_is_all_zero() {
        let x = vec![vec![1.0], vec![1.0]];
        let y = vec![3.0, 3.0];
        let m = gbt_fit(&x, &y, 5, 3, 0.1, 1, 0).unwrap();
        assert_eq!(gbt_feature_importance(&m, 1), vec![0.0]);
    }
}
