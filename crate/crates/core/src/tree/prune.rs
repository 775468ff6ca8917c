//! Cost-complexity pruning with cross-validated choice of the penalty.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{grow_tree_on, TreeModel, TreeNode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::num;
use crate::rng::{self, tag};

/// Nested subtrees from weakest-link pruning. Entry `k` is optimal for
/// penalties in `[alphas[k], alphas[k + 1])`; `collapsed[k][id]` marks nodes
/// turned into leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePath {
    pub alphas: Vec<f64>,
    pub collapsed: Vec<Vec<bool>>,
}

impl PrunePath {
    /// Index of the subtree optimal at penalty `alpha`.
    pub fn index_for(&self, alpha: f64) -> usize {
        self.alphas.partition_point(|&a| a <= alpha).saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PruneOptions {
    pub folds: usize,
    pub seed: u64,
    /// Pick the simplest subtree within one standard error of the best
    /// cross-validated loss instead of the best itself.
    pub one_se: bool,
}

/// Subtree loss and leaf count under `collapsed`, for every node.
fn subtree_stats(nodes: &[TreeNode], collapsed: &[bool]) -> (Vec<f64>, Vec<usize>) {
    let mut loss = vec![0.0; nodes.len()];
    let mut leaves = vec![0usize; nodes.len()];
    // children follow their parent in preorder, so a reverse sweep is post-order
    for id in (0..nodes.len()).rev() {
        match nodes[id].children {
            Some(c) if !collapsed[id] => {
                loss[id] = loss[c.left] + loss[c.right];
                leaves[id] = leaves[c.left] + leaves[c.right];
            }
            _ => {
                loss[id] = nodes[id].loss;
                leaves[id] = 1;
            }
        }
    }
    (loss, leaves)
}

fn active_internal(nodes: &[TreeNode], collapsed: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        if collapsed[id] {
            continue;
        }
        if let Some(c) = nodes[id].children {
            out.push(id);
            stack.push(c.left);
            stack.push(c.right);
        }
    }
    out
}

/// Weakest-link pruning sequence, from the full tree (penalty 0) down to the
/// root.
pub fn cost_complexity_path(tree: &TreeModel) -> PrunePath {
    let nodes = &tree.nodes;
    let mut collapsed = vec![false; nodes.len()];
    let mut path = PrunePath { alphas: Vec::new(), collapsed: Vec::new() };
    loop {
        let internal = active_internal(nodes, &collapsed);
        if internal.is_empty() {
            break;
        }
        let (loss, leaves) = subtree_stats(nodes, &collapsed);
        let link = |id: usize| (nodes[id].loss - loss[id]) / (leaves[id] - 1) as f64;
        let weakest = internal.iter().map(|&id| link(id)).fold(f64::INFINITY, f64::min);
        if path.alphas.is_empty() && weakest > 0.0 {
            path.alphas.push(0.0);
            path.collapsed.push(collapsed.clone());
        }
        let tol = 1e-12 * weakest.abs().max(1e-300);
        for &id in &internal {
            if link(id) <= weakest + tol {
                collapsed[id] = true;
            }
        }
        path.alphas.push(weakest.max(0.0));
        path.collapsed.push(collapsed.clone());
    }
    if path.alphas.is_empty() {
        path.alphas.push(0.0);
        path.collapsed.push(collapsed);
    }
    path
}

fn predict_collapsed<'a>(tree: &'a TreeModel, collapsed: &[bool], w: &[f64]) -> &'a [f64] {
    let mut id = 0;
    while let (Some(c), false) = (&tree.nodes[id].children, collapsed[id]) {
        id = if c.rule.goes_left(w) { c.left } else { c.right };
    }
    &tree.nodes[id].value
}

/// Rebuilds `tree` with the `collapsed` nodes turned into leaves.
pub(crate) fn apply_collapse(tree: &TreeModel, collapsed: &[bool]) -> TreeModel {
    fn copy(tree: &TreeModel, collapsed: &[bool], id: usize, out: &mut Vec<TreeNode>) -> usize {
        let new_id = out.len();
        let mut node = tree.nodes[id].clone();
        let children = node.children.take().filter(|_| !collapsed[id]);
        out.push(node);
        if let Some(mut c) = children {
            c.left = copy(tree, collapsed, c.left, out);
            c.right = copy(tree, collapsed, c.right, out);
            out[new_id].children = Some(c);
        }
        new_id
    }
    let mut nodes = Vec::new();
    copy(tree, collapsed, 0, &mut nodes);
    TreeModel { nodes, grid: tree.grid.clone(), params: tree.params }
}

/// Prunes a tree grown on all rows of `responses` by cross-validated cost
/// complexity, choosing the subtree with the smallest CV loss.
pub fn prune_tree(tree: &TreeModel, responses: &Matrix, covariates: &Matrix, folds: usize, seed: u64) -> Result<TreeModel> {
    prune_tree_with(tree, responses, covariates, PruneOptions { folds, seed, one_se: false })
}

pub fn prune_tree_with(tree: &TreeModel, responses: &Matrix, covariates: &Matrix, options: PruneOptions) -> Result<TreeModel> {
    let n = responses.nrows();
    if options.folds < 2 {
        return Err(Error::Parameter("pruning needs at least 2 folds".into()));
    }
    if options.folds > n {
        return Err(Error::Parameter(alloc::format!("{} folds for {n} rows", options.folds)));
    }
    if tree.leaf_count() == 1 {
        return Ok(tree.clone());
    }
    let path = cost_complexity_path(tree);
    let k = path.alphas.len();
    // representative penalty per subtree: geometric mean of its interval
    let reps: Vec<f64> = (0..k)
        .map(|i| if i + 1 < k { num::sqrt(path.alphas[i] * path.alphas[i + 1]) } else { f64::INFINITY })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::from_seed(rng::derive(options.seed, tag::FOLDS, 0)));
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % options.folds;
    }
    let weights = tree.grid.weights();
    // per-row CV loss for each candidate subtree
    let mut row_loss = vec![vec![0.0; n]; k];
    for fold in 0..options.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let fold_tree = grow_tree_on(&train, responses, covariates, &tree.grid, tree.params)?;
        let fold_path = cost_complexity_path(&fold_tree);
        for (c, &alpha) in reps.iter().enumerate() {
            let mask = &fold_path.collapsed[fold_path.index_for(alpha)];
            for i in (0..n).filter(|&i| fold_of[i] == fold) {
                let pred = predict_collapsed(&fold_tree, mask, covariates.row(i));
                row_loss[c][i] = responses.row(i).iter().zip(pred).zip(weights).map(|((y, p), w)| w * (y - p) * (y - p)).sum();
            }
        }
    }
    let totals: Vec<f64> = row_loss.iter().map(|r| r.iter().sum()).collect();
    // ties resolve to the smaller subtree
    let mut best = 0;
    for c in 1..k {
        if totals[c] <= totals[best] {
            best = c;
        }
    }
    let chosen = if options.one_se {
        let mean = totals[best] / n as f64;
        let var = row_loss[best].iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        let bound = totals[best] + num::sqrt(n as f64 * var);
        (best..k).rev().find(|&c| totals[c] <= bound).unwrap_or(best)
    } else {
        best
    };
    Ok(apply_collapse(tree, &path.collapsed[chosen]))
}
