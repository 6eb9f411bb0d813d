//! Exact K-nearest-neighbor regression. A KD-tree index is built for low
//! dimensionality and must return exactly the brute-force neighbor sets;
//! distance ties break toward the lower training row index.

use super::{check_rows, ModelError};
use serde::{Deserialize, Serialize};

/// Dimensionality above which the index falls back to brute force.
const KDTREE_MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Manhattan,
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum KdNode {
    Leaf {
        indices: Vec<usize>,
    },
    Split {
        axis: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KdTree {
    nodes: Vec<KdNode>,
    root: usize,
}

const LEAF_SIZE: usize = 16;

impl KdTree {
    fn build(points: &[Vec<f64>]) -> KdTree {
        let mut nodes = Vec::new();
        let indices: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_node(points, indices, 0, &mut nodes);
        KdTree { nodes, root }
    }

    fn build_node(
        points: &[Vec<f64>],
        mut indices: Vec<usize>,
        depth: usize,
        nodes: &mut Vec<KdNode>,
    ) -> usize {
        let d = points[0].len();
        let axis = depth % d;
        if indices.len() <= LEAF_SIZE {
            nodes.push(KdNode::Leaf { indices });
            return nodes.len() - 1;
        }
        indices.sort_by(|a, b| {
            points[*a][axis]
                .partial_cmp(&points[*b][axis])
                .unwrap()
                .then(a.cmp(b))
        });
        let mid = indices.len() / 2;
        let threshold = points[indices[mid]][axis];
        let right_indices = indices.split_off(mid);
        // Degenerate axis (all values equal on the split): keep a leaf.
        if indices.is_empty() || right_indices.is_empty() {
            let mut all = indices;
            all.extend(right_indices);
            nodes.push(KdNode::Leaf { indices: all });
            return nodes.len() - 1;
        }
        let left = Self::build_node(points, indices, depth + 1, nodes);
        let right = Self::build_node(points, right_indices, depth + 1, nodes);
        nodes.push(KdNode::Split {
            axis,
            threshold,
            left,
            right,
        });
        nodes.len() - 1
    }
}

/// (distance, training row index); ordering is lexicographic so exact
/// distance ties resolve toward the lower index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Neighbor {
    dist: f64,
    index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist
            .partial_cmp(&other.dist)
            .unwrap()
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub metric: Metric,
    pub weighting: Weighting,
    index: Option<KdTree>,
}

impl KnnModel {
    pub fn uses_index(&self) -> bool {
        self.index.is_some()
    }

    /// The k nearest training rows to `query`, nearest first.
    pub fn neighbors(&self, query: &[f64], k: usize) -> Result<Vec<(f64, usize)>, ModelError> {
        if query.len() != self.train_x[0].len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.train_x[0].len(),
                got: query.len(),
            });
        }
        if k == 0 || k > self.train_x.len() {
            return Err(ModelError::KOutOfRange {
                k,
                max: self.train_x.len(),
            });
        }
        let mut heap: std::collections::BinaryHeap<Neighbor> =
            std::collections::BinaryHeap::with_capacity(k + 1);
        let mut consider = |i: usize, heap: &mut std::collections::BinaryHeap<Neighbor>| {
            let dist = self.metric.distance(query, &self.train_x[i]);
            let candidate = Neighbor { dist, index: i };
            if heap.len() < k {
                heap.push(candidate);
            } else if candidate < *heap.peek().unwrap() {
                heap.pop();
                heap.push(candidate);
            }
        };
        match &self.index {
            None => {
                for i in 0..self.train_x.len() {
                    consider(i, &mut heap);
                }
            }
            Some(tree) => {
                self.search(tree, tree.root, query, k, &mut heap, &mut consider);
            }
        }
        let mut out: Vec<Neighbor> = heap.into_vec();
        out.sort();
        Ok(out.into_iter().map(|n| (n.dist, n.index)).collect())
    }

    fn search<F>(
        &self,
        tree: &KdTree,
        node: usize,
        query: &[f64],
        k: usize,
        heap: &mut std::collections::BinaryHeap<Neighbor>,
        consider: &mut F,
    ) where
        F: FnMut(usize, &mut std::collections::BinaryHeap<Neighbor>),
    {
        match &tree.nodes[node] {
            KdNode::Leaf { indices } => {
                for &i in indices {
                    consider(i, heap);
                }
            }
            KdNode::Split {
                axis,
                threshold,
                left,
                right,
            } => {
                let diff = query[*axis] - threshold;
                let (near, far) = if diff < 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(tree, near, query, k, heap, consider);
                // The axis gap lower-bounds both metrics; equality must
                // still be explored so index tie-breaks stay exact.
                let bound = diff.abs();
                if heap.len() < k || bound <= heap.peek().unwrap().dist {
                    self.search(tree, far, query, k, heap, consider);
                }
            }
        }
    }
}

/// Stores the training data and builds an exact KD-tree index when the
/// dimensionality allows it.
pub fn knn_fit(
    x: &[Vec<f64>],
    y: &[f64],
    metric: Metric,
    weighting: Weighting,
) -> Result<KnnModel, ModelError> {
    check_rows(x, y)?;
    let index = if x[0].len() <= KDTREE_MAX_DIM && !x[0].is_empty() {
        Some(KdTree::build(x))
    } else {
        None
    };
    Ok(KnnModel {
        train_x: x.to_vec(),
        train_y: y.to_vec(),
        metric,
        weighting,
        index,
    })
}

/// Average (or inverse-distance weighted average) of the k nearest
/// neighbors' targets.
pub fn knn_predict(model: &KnnModel, x_row: &[f64], k: usize) -> Result<f64, ModelError> {
    let neighbors = model.neighbors(x_row, k)?;
    Ok(match model.weighting {
        Weighting::Uniform => {
            neighbors.iter().map(|(_, i)| model.train_y[*i]).sum::<f64>() / k as f64
        }
        Weighting::InverseDistance => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (d, i) in neighbors {
                let w = 1.0 / (d + 1e-12);
                num += w * model.train_y[i];
                den += w;
            }
            num / den
        }
    })
}
