//! Multivariate regression trees under the diagonally weighted squared-error
//! loss `sum_i (y_i - beta)' D^{-1} (y_i - beta)` with `D_jj = n / w_j`.

pub mod prune;

pub use prune::{cost_complexity_path, prune_tree, prune_tree_with, PruneOptions, PrunePath};

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::censoring::midpoint;
use crate::data::TimeGrid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, tag};

/// Send `x[variable] <= threshold` left.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitRule {
    pub variable: usize,
    pub threshold: f64,
}

impl SplitRule {
    #[inline]
    pub fn goes_left(&self, w: &[f64]) -> bool {
        w[self.variable] <= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Children {
    pub rule: SplitRule,
    pub left: usize,
    pub right: usize,
}

/// A tree node. Internal nodes keep their own mean and loss for pruning.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeNode {
    /// Coordinate means of the node's training responses.
    pub value: Vec<f64>,
    /// Number of training rows (with bootstrap multiplicity).
    pub count: usize,
    /// `sum_j w_j SSE_j` over the node's rows.
    pub loss: f64,
    pub children: Option<Children>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeParams {
    /// Minimum number of training rows in a leaf.
    pub nodesize: usize,
    /// Candidate variables drawn per node.
    pub mtry: usize,
    pub seed: u64,
}

/// A fitted tree; nodes are stored in preorder with the root at 0.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub grid: TimeGrid,
    pub params: TreeParams,
}

impl TreeModel {
    /// A single-leaf tree.
    pub fn leaf(value: Vec<f64>, count: usize, grid: TimeGrid, params: TreeParams) -> Self {
        TreeModel { nodes: vec![TreeNode { value, count, loss: 0.0, children: None }], grid, params }
    }

    /// Joins two trees under `rule`. The parent value is the count-weighted
    /// mean of the two roots.
    pub fn join(rule: SplitRule, left: TreeModel, right: TreeModel) -> Self {
        let (l, r) = (&left.nodes[0], &right.nodes[0]);
        let count = l.count + r.count;
        let value = l
            .value
            .iter()
            .zip(&r.value)
            .map(|(a, b)| if count == 0 { 0.5 * (a + b) } else { (a * l.count as f64 + b * r.count as f64) / count as f64 })
            .collect();
        let mut nodes = Vec::with_capacity(1 + left.nodes.len() + right.nodes.len());
        nodes.push(TreeNode { value, count, loss: l.loss + r.loss, children: None });
        let offset_left = 1;
        let offset_right = 1 + left.nodes.len();
        for (nodes_in, offset) in [(left.nodes, offset_left), (right.nodes, offset_right)] {
            for mut node in nodes_in {
                if let Some(c) = node.children.as_mut() {
                    c.left += offset;
                    c.right += offset;
                }
                nodes.push(node);
            }
        }
        nodes[0].children = Some(Children { rule, left: offset_left, right: offset_right });
        TreeModel { nodes, grid: left.grid, params: left.params }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Index of the leaf reached by `w`.
    pub fn leaf_index(&self, w: &[f64]) -> usize {
        let mut id = 0;
        while let Some(c) = &self.nodes[id].children {
            id = if c.rule.goes_left(w) { c.left } else { c.right };
        }
        id
    }

    /// Total `sum_j w_j SSE_j` over the leaves.
    pub fn leaf_loss(&self) -> f64 {
        self.nodes.iter().filter(|n| n.is_leaf()).map(|n| n.loss).sum()
    }

    /// Variables used by any split.
    pub fn split_variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.nodes.iter().filter_map(|n| n.children.map(|c| c.rule.variable)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Routes `w` to its leaf and returns the leaf vector.
pub fn predict_tree<'a>(tree: &'a TreeModel, w: &[f64]) -> &'a [f64] {
    &tree.nodes[tree.leaf_index(w)].value
}

/// A split with its loss reduction
/// `sum_j (1 / D_jj) (SSE_j(parent) - SSE_j(left) - SSE_j(right))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub rule: SplitRule,
    pub reduction: f64,
}

/// Per-coordinate means and weighted loss of `rows`.
fn node_stats(rows: &[usize], responses: &Matrix, weights: &[f64]) -> (Vec<f64>, f64) {
    let j = responses.ncols();
    let mut mean = vec![0.0; j];
    for &i in rows {
        for (m, y) in mean.iter_mut().zip(responses.row(i)) {
            *m += y;
        }
    }
    let n = rows.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let mut loss = 0.0;
    for &i in rows {
        for ((y, m), w) in responses.row(i).iter().zip(&mean).zip(weights) {
            let d = y - m;
            loss += w * d * d;
        }
    }
    (mean, loss)
}

fn is_pure(rows: &[usize], responses: &Matrix) -> bool {
    let first = responses.row(rows[0]);
    rows.iter().all(|&i| responses.row(i) == first)
}

/// Exhaustive search over midpoints between consecutive distinct values of
/// each candidate variable. Both children must keep at least `nodesize`
/// rows. Returns the split with the largest strictly positive reduction; ties
/// go to the lower variable index, then the lower threshold.
pub fn best_split(
    rows: &[usize],
    responses: &Matrix,
    covariates: &Matrix,
    candidate_vars: &[usize],
    grid: &TimeGrid,
    nodesize: usize,
) -> Option<Split> {
    let scale: Vec<f64> = grid.weights().iter().map(|w| w / responses.nrows() as f64).collect();
    let mut vars = candidate_vars.to_vec();
    vars.sort_unstable();
    vars.dedup();
    let (mean, loss) = node_stats(rows, responses, grid.weights());
    search_split(rows, responses, covariates, &vars, &scale, nodesize.max(1), &mean, loss / responses.nrows() as f64)
}

#[allow(clippy::too_many_arguments)]
fn search_split(
    rows: &[usize],
    responses: &Matrix,
    covariates: &Matrix,
    vars: &[usize],
    scale: &[f64],
    nodesize: usize,
    mean: &[f64],
    parent_loss: f64,
) -> Option<Split> {
    let n = rows.len();
    if n < 2 * nodesize || is_pure(rows, responses) {
        return None;
    }
    let j = responses.ncols();
    // deviations from the parent mean
    let mut dev_total = vec![0.0; j];
    for &i in rows {
        for ((t, y), m) in dev_total.iter_mut().zip(responses.row(i)).zip(mean) {
            *t += y - m;
        }
    }
    let mut order = rows.to_vec();
    let mut left_dev = vec![0.0; j];
    let mut best: Option<Split> = None;
    for &var in vars {
        order.sort_by(|&a, &b| covariates[(a, var)].total_cmp(&covariates[(b, var)]).then(a.cmp(&b)));
        left_dev.iter_mut().for_each(|d| *d = 0.0);
        for k in 0..n - 1 {
            let i = order[k];
            for ((d, y), m) in left_dev.iter_mut().zip(responses.row(i)).zip(mean) {
                *d += y - m;
            }
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < nodesize {
                continue;
            }
            if n_right < nodesize {
                break;
            }
            let (lo, hi) = (covariates[(i, var)], covariates[(order[k + 1], var)]);
            if lo == hi {
                continue;
            }
            let mut reduction = 0.0;
            for c in 0..j {
                let l = left_dev[c];
                let r = dev_total[c] - l;
                reduction += scale[c] * (l * l / n_left as f64 + r * r / n_right as f64 - dev_total[c] * dev_total[c] / n as f64);
            }
            let better = match &best {
                None => true,
                Some(b) => reduction > b.reduction + 1e-12 * b.reduction.abs(),
            };
            if better {
                best = Some(Split { rule: SplitRule { variable: var, threshold: midpoint(lo, hi) }, reduction });
            }
        }
    }
    best.filter(|b| b.reduction > 1e-12 * parent_loss && b.reduction > 0.0)
}

fn check_params(p: usize, params: &TreeParams) -> Result<()> {
    if params.nodesize < 1 {
        return Err(Error::Parameter("nodesize must be at least 1".into()));
    }
    if params.mtry < 1 || params.mtry > p {
        return Err(Error::Parameter(alloc::format!("mtry must lie in 1..={p}, got {}", params.mtry)));
    }
    Ok(())
}

/// Grows an unpruned tree on all rows of `responses`.
pub fn grow_tree(responses: &Matrix, covariates: &Matrix, grid: &TimeGrid, params: TreeParams) -> Result<TreeModel> {
    let rows: Vec<usize> = (0..responses.nrows()).collect();
    grow_tree_on(&rows, responses, covariates, grid, params)
}

/// Grows an unpruned tree on `rows` (which may repeat, as in a bootstrap
/// sample). Candidate variables at each node are drawn from a generator
/// seeded by the node's path from the root, so the tree does not depend on
/// expansion order.
pub fn grow_tree_on(
    rows: &[usize],
    responses: &Matrix,
    covariates: &Matrix,
    grid: &TimeGrid,
    params: TreeParams,
) -> Result<TreeModel> {
    check_params(covariates.ncols(), &params)?;
    if rows.is_empty() {
        return Err(Error::Estimation("cannot grow a tree on zero rows".into()));
    }
    if responses.ncols() != grid.len() {
        return Err(Error::Configuration(alloc::format!(
            "responses have {} columns but the grid has {} times",
            responses.ncols(),
            grid.len()
        )));
    }
    if responses.nrows() != covariates.nrows() {
        return Err(Error::Configuration("responses and covariates differ in row count".into()));
    }
    let grower = Grower {
        responses,
        covariates,
        weights: grid.weights(),
        scale: grid.weights().iter().map(|w| w / rows.len() as f64).collect(),
        params,
    };
    let mut nodes = Vec::new();
    grower.grow(rows.to_vec(), params.seed, &mut nodes);
    Ok(TreeModel { nodes, grid: grid.clone(), params })
}

struct Grower<'a> {
    responses: &'a Matrix,
    covariates: &'a Matrix,
    weights: &'a [f64],
    scale: Vec<f64>,
    params: TreeParams,
}

impl Grower<'_> {
    fn candidates(&self, seed: u64) -> Vec<usize> {
        let p = self.covariates.ncols();
        if self.params.mtry >= p {
            return (0..p).collect();
        }
        let mut rng = rng::from_seed(seed);
        let mut vars = index::sample(&mut rng, p, self.params.mtry).into_vec();
        vars.sort_unstable();
        vars
    }

    fn grow(&self, rows: Vec<usize>, seed: u64, nodes: &mut Vec<TreeNode>) -> usize {
        let (value, loss) = node_stats(&rows, self.responses, self.weights);
        let id = nodes.len();
        let split = if rows.len() >= 2 * self.params.nodesize {
            let vars = self.candidates(seed);
            search_split(
                &rows,
                self.responses,
                self.covariates,
                &vars,
                &self.scale,
                self.params.nodesize,
                &value,
                loss / rows.len() as f64,
            )
        } else {
            None
        };
        nodes.push(TreeNode { value, count: rows.len(), loss, children: None });
        if let Some(split) = split {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| split.rule.goes_left(self.covariates.row(i)));
            let left = self.grow(left_rows, rng::derive(seed, tag::NODE_LEFT, 0), nodes);
            let right = self.grow(right_rows, rng::derive(seed, tag::NODE_RIGHT, 0), nodes);
            nodes[id].children = Some(Children { rule: split.rule, left, right });
        }
        id
    }
}
