//! CART regression tree grown greedily by variance reduction.

use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;
use crate::{Error, Result};

pub const DEFAULT_MAX_DEPTH: usize = 8;
pub const DEFAULT_MIN_LEAF: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "node")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn fit(x: &Matrix, y: &[f64], max_depth: usize, min_leaf: usize) -> Result<Self> {
        if x.rows() != y.len() || y.is_empty() {
            return Err(Error::Data(format!(
                "{} feature rows for {} outcomes",
                x.rows(),
                y.len()
            )));
        }
        if min_leaf == 0 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        let mut tree = RegressionTree {
            max_depth,
            min_leaf,
            nodes: Vec::new(),
        };
        let idx: Vec<usize> = (0..y.len()).collect();
        tree.grow(x, y, idx, 0);
        Ok(tree)
    }

    fn grow(&mut self, x: &Matrix, y: &[f64], idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return id;
        }
        let Some((feature, threshold)) = best_split(x, y, &idx, self.min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| x[(i, feature)] <= threshold);
        let left = self.grow(x, y, l, depth + 1);
        let right = self.grow(x, y, r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Split maximising the reduction in squared error with both children
/// holding at least `min_leaf` rows. Thresholds are midpoints between
/// consecutive distinct values; ties keep the lowest feature and threshold.
fn best_split(x: &Matrix, y: &[f64], idx: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..x.cols() {
        order.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
        let (mut left_sum, mut left_sq) = (0.0, 0.0);
        for pos in 0..n - 1 {
            let v = y[order[pos]];
            left_sum += v;
            left_sq += v * v;
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (a, b) = (x[(order[pos], f)], x[(order[pos + 1], f)]);
            if a == b {
                continue;
            }
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl as f64)
                + (right_sq - right_sum * right_sum / nr as f64);
            let gain = parent_sse - sse;
            if gain > 1e-12 * parent_sse.abs().max(f64::MIN_POSITIVE)
                && best.is_none_or(|(g, _, _)| gain > g)
            {
                best = Some((gain, f, 0.5 * (a + b)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
