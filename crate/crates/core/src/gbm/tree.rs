//! Depth-limited least-squares regression trees with exact greedy splits.

use serde::{Deserialize, Serialize};

use super::encode::FeatureMatrix;
use super::loss::row_deviance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Flattened tree arrays as stored in model files. Leaves have `feature = -1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeArrays {
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeArrays", try_from = "TreeArrays")]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl From<RegressionTree> for TreeArrays {
    fn from(t: RegressionTree) -> Self {
        let mut a = TreeArrays {
            feature: Vec::with_capacity(t.nodes.len()),
            threshold: Vec::with_capacity(t.nodes.len()),
            left: Vec::with_capacity(t.nodes.len()),
            right: Vec::with_capacity(t.nodes.len()),
            value: Vec::with_capacity(t.nodes.len()),
        };
        for n in t.nodes {
            let (f, th, l, r, v) = match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => (feature as i64, threshold, left as u32, right as u32, 0.0),
                Node::Leaf { value } => (-1, 0.0, 0, 0, value),
            };
            a.feature.push(f);
            a.threshold.push(th);
            a.left.push(l);
            a.right.push(r);
            a.value.push(v);
        }
        a
    }
}

impl TryFrom<TreeArrays> for RegressionTree {
    type Error = Error;

    fn try_from(a: TreeArrays) -> Result<Self> {
        let n = a.feature.len();
        if [a.threshold.len(), a.left.len(), a.right.len(), a.value.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Format("tree arrays differ in length".into()));
        }
        let nodes = (0..n)
            .map(|i| {
                if a.feature[i] < 0 {
                    Ok(Node::Leaf { value: a.value[i] })
                } else {
                    let (left, right) = (a.left[i] as usize, a.right[i] as usize);
                    // children always follow their parent
                    if left <= i || right <= i || left >= n || right >= n {
                        return Err(Error::Format(format!("node {i} has invalid children")));
                    }
                    Ok(Node::Split {
                        feature: a.feature[i] as usize,
                        threshold: a.threshold[i],
                        left,
                        right,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        RegressionTree::from_nodes(nodes)
    }
}

impl RegressionTree {
    /// Builds a tree from nodes in parent-before-child order with node 0 as root.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                for c in [left, right] {
                    if c <= i || c >= nodes.len() {
                        return Err(Error::Format(format!("node {i} has invalid children")));
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::Format("tree nodes do not form a single tree".into()));
        }
        Ok(RegressionTree { nodes })
    }

    /// A single leaf.
    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// `(feature, threshold)` of the root, if the root is a split.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Relative slack under which two split gains count as equal. Equal gains
/// resolve to the lowest feature index, then the lowest threshold.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-10;

/// Split point between two adjacent distinct sorted values.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    /// Rows going left; they are the first `n_left` of the node's order on `feature`.
    n_left: usize,
    gain: f64,
}

pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
}

/// Per-feature row orders sorted by feature value, for a subset of rows.
#[derive(Clone)]
pub(crate) struct SortedColumns {
    orders: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub fn new(x: &FeatureMatrix, rows: &[u32]) -> Self {
        let orders = (0..x.n_cols())
            .map(|j| {
                let mut o = rows.to_vec();
                o.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                o
            })
            .collect();
        SortedColumns { orders }
    }

    fn n_rows(&self) -> usize {
        self.orders.first().map_or(0, Vec::len)
    }
}

/// Grows one tree on pseudo-residuals `grad = y - p`.
///
/// Leaves take the Newton step `sum(grad) / sum(p(1 - p))`. If applying that
/// step at the learning rate would raise the leaf's deviance, the step is
/// halved until it does not.
pub(crate) struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    raw: &'a [f64],
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a TreeParams,
    orders: Vec<Vec<u32>>,
    go_left: Vec<bool>,
    buf: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        y: &'a [f64],
        raw: &'a [f64],
        grad: &'a [f64],
        hess: &'a [f64],
        sorted: &SortedColumns,
        params: &'a TreeParams,
    ) -> Self {
        TreeBuilder {
            x,
            y,
            raw,
            grad,
            hess,
            params,
            orders: sorted.orders.clone(),
            go_left: vec![false; x.n_rows()],
            buf: Vec::with_capacity(sorted.n_rows()),
            nodes: Vec::new(),
        }
    }

    pub fn build(mut self) -> RegressionTree {
        let n = self.orders.first().map_or(0, Vec::len);
        if self.x.n_cols() == 0 || n == 0 {
            return RegressionTree::constant(0.0);
        }
        self.grow(0, n, 0);
        RegressionTree { nodes: self.nodes }
    }

    fn grow(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let split = if depth < self.params.max_depth {
            self.best_split(start, end)
        } else {
            None
        };
        match split {
            None => {
                let value = self.leaf_value(start, end);
                self.nodes[id] = Node::Leaf { value };
            }
            Some(s) => {
                self.partition(start, end, &s);
                let mid = start + s.n_left;
                let left = self.grow(start, mid, depth + 1);
                let right = self.grow(mid, end, depth + 1);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }

    fn best_split(&self, start: usize, end: usize) -> Option<SplitCandidate> {
        let n = end - start;
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let rows = &self.orders[0][start..end];
        let total: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let sum_sq: f64 = rows.iter().map(|&r| self.grad[r as usize].powi(2)).sum();
        let parent = total * total / n as f64;
        let tol = GAIN_TIE_TOLERANCE * sum_sq.max(f64::MIN_POSITIVE);

        let mut best: Option<SplitCandidate> = None;
        for (j, order) in self.orders.iter().enumerate() {
            let order = &order[start..end];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let r = order[k] as usize;
                left_sum += self.grad[r];
                let n_left = k + 1;
                if n_left < min_leaf {
                    continue;
                }
                if n - n_left < min_leaf {
                    break;
                }
                let lo = self.x.get(r, j);
                let hi = self.x.get(order[k + 1] as usize, j);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64
                    - parent;
                let better = match &best {
                    None => gain > tol,
                    Some(b) => gain > b.gain + tol,
                };
                if better {
                    best = Some(SplitCandidate {
                        feature: j,
                        threshold: midpoint(lo, hi),
                        n_left,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn partition(&mut self, start: usize, end: usize, s: &SplitCandidate) {
        let split_order = &self.orders[s.feature][start..end];
        for (k, &r) in split_order.iter().enumerate() {
            self.go_left[r as usize] = k < s.n_left;
        }
        for j in 0..self.orders.len() {
            if j == s.feature {
                continue;
            }
            let slice = &mut self.orders[j][start..end];
            self.buf.clear();
            let mut w = 0;
            for k in 0..slice.len() {
                let r = slice[k];
                if self.go_left[r as usize] {
                    slice[w] = r;
                    w += 1;
                } else {
                    self.buf.push(r);
                }
            }
            slice[w..].copy_from_slice(&self.buf);
        }
    }

    fn leaf_value(&self, start: usize, end: usize) -> f64 {
        let rows = &self.orders[0][start..end];
        let g: f64 = rows.iter().map(|&r| self.grad[r as usize]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r as usize]).sum();
        if g == 0.0 {
            return 0.0;
        }
        let mut step = g / h.max(1e-12);
        let lr = self.params.learning_rate;
        let leaf_loss = |delta: f64| -> f64 {
            rows.iter()
                .map(|&r| row_deviance(self.y[r as usize], self.raw[r as usize] + delta))
                .sum()
        };
        let base = leaf_loss(0.0);
        for _ in 0..64 {
            if leaf_loss(lr * step) <= base {
                return step;
            }
            step *= 0.5;
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stump_prediction() {
        let t = RegressionTree::from_nodes(vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: -2.0 },
            Node::Leaf { value: 2.0 },
        ])
        .unwrap();
        assert_eq!(t.predict(&[-1.0]), -2.0);
        assert_eq!(t.predict(&[0.0]), -2.0);
        assert_eq!(t.predict(&[0.5]), 2.0);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.leaf_count(), 2);
    }

    #[test]
    fn malformed_trees_rejected() {
        assert!(RegressionTree::from_nodes(vec![]).is_err());
        let cyclic = vec![Node::Split {
            feature: 0,
            threshold: 0.0,
            left: 0,
            right: 0,
        }];
        assert!(RegressionTree::from_nodes(cyclic).is_err());
        let shared = vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 1,
            },
            Node::Leaf { value: 0.0 },
        ];
        assert!(RegressionTree::from_nodes(shared).is_err());
    }

    #[test]
    fn midpoint_stays_below_upper_value() {
        assert_eq!(midpoint(1.0, 3.0), 2.0);
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert_eq!(midpoint(a, b), a);
    }

    #[test]
    fn flattened_round_trip() {
        let t = RegressionTree::from_nodes(vec![
            Node::Split {
                feature: 1,
                threshold: 2.5,
                left: 1,
                right: 2,
            },
            Node::Leaf { value: -0.25 },
            Node::Leaf { value: 0.75 },
        ])
        .unwrap();
        let text = toml::to_string(&t).unwrap();
        let back: RegressionTree = toml::from_str(&text).unwrap();
        assert_eq!(back, t);
    }
}
