//! Bootstrap forests of multivariate trees grown on imputed responses.
//!
//! [`fit_m0`] imputes once and grows `B` trees. [`fit_m1`] redraws Gaussian
//! multipliers for each of `R` replicates, imputes with the randomized
//! transform and grows `B` trees per replicate; the final predictor averages
//! all `R * B` trees with equal weight.
//!
//! Tree `b` of replicate `r` takes its bootstrap sample and its growth seed
//! from `(seed, r, b)` alone, so forests are reproducible regardless of how
//! trees are scheduled.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::data::{Dataset, TimeGrid};
use crate::error::{Error, Result};
use crate::imputation::{build_imputed_matrix, ImputedMatrix, Method, Nuisance};
use crate::matrix::Matrix;
use crate::num;
use crate::rng::{self, tag};
use crate::tree::{grow_tree_on, predict_tree, TreeModel, TreeParams};

/// `max(1, floor(sqrt(p)))`.
pub fn default_mtry(p: usize) -> usize {
    (num::floor(num::sqrt(p as f64)) as usize).max(1)
}

pub const DEFAULT_NODESIZE: usize = 20;
pub const DEFAULT_TREES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestParams {
    /// Trees per replicate (`B`).
    pub n_trees: usize,
    pub nodesize: usize,
    pub mtry: usize,
    pub seed: u64,
    /// Draw bootstrap samples; when false every tree sees each row once.
    pub bootstrap: bool,
}

impl ForestParams {
    /// 500 trees, nodesize 20, mtry `floor(sqrt(p))`.
    pub fn tuning_set_1(p: usize, seed: u64) -> Self {
        ForestParams { n_trees: DEFAULT_TREES, nodesize: DEFAULT_NODESIZE, mtry: default_mtry(p), seed, bootstrap: true }
    }

    fn check(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Parameter("a forest needs at least one tree".into()));
        }
        Ok(())
    }
}

/// Provenance of a fitted forest.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestMeta {
    pub replicates: usize,
    pub params: ForestParams,
    /// Free-form description of the nuisance models used for imputation.
    pub nuisance: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    /// In-bag multiplicity of each training row, per tree. Empty for forests
    /// assembled by hand.
    inbag: Vec<Vec<u32>>,
    grid: TimeGrid,
    cause: u32,
    method: Method,
    meta: ForestMeta,
}

impl ForestModel {
    /// A forest from existing trees, without in-bag records.
    pub fn from_trees(trees: Vec<TreeModel>, grid: TimeGrid, cause: u32, method: Method) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Configuration("a forest needs at least one tree".into()));
        }
        if trees.iter().any(|t| t.grid != grid) {
            return Err(Error::Configuration("all trees must share the forest grid".into()));
        }
        let params = trees[0].params;
        let meta = ForestMeta {
            replicates: 1,
            params: ForestParams { n_trees: trees.len(), nodesize: params.nodesize, mtry: params.mtry, seed: params.seed, bootstrap: false },
            nuisance: String::new(),
        };
        Ok(ForestModel { trees, inbag: Vec::new(), grid, cause, method, meta })
    }

    /// Attaches in-bag counts, one vector of row multiplicities per tree.
    pub fn with_inbag(mut self, inbag: Vec<Vec<u32>>) -> Result<Self> {
        if inbag.len() != self.trees.len() {
            return Err(Error::Configuration(alloc::format!("{} in-bag records for {} trees", inbag.len(), self.trees.len())));
        }
        if inbag.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::Configuration("in-bag records differ in length".into()));
        }
        self.inbag = inbag;
        Ok(self)
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn inbag(&self) -> &[Vec<u32>] {
        &self.inbag
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn cause(&self) -> u32 {
        self.cause
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn meta(&self) -> &ForestMeta {
        &self.meta
    }

    pub fn set_nuisance_label(&mut self, label: impl Into<String>) {
        self.meta.nuisance = label.into();
    }
}

/// A fitted forest with the imputed responses it was grown on (one matrix per
/// replicate).
#[derive(Debug, Clone)]
pub struct ForestFit {
    pub model: ForestModel,
    pub imputed: Vec<ImputedMatrix>,
}

fn tree_key(replicate: usize, tree: usize) -> u64 {
    ((replicate as u64) << 32) | tree as u64
}

/// Grows `params.n_trees` trees on `responses` for replicate `replicate`.
/// Returns the trees and their in-bag counts.
pub fn fit_forest_on(
    responses: &Matrix,
    covariates: &Matrix,
    grid: &TimeGrid,
    params: &ForestParams,
    replicate: usize,
) -> Result<(Vec<TreeModel>, Vec<Vec<u32>>)> {
    params.check()?;
    let n = responses.nrows();
    let one = |b: usize| -> Result<(TreeModel, Vec<u32>)> {
        let key = tree_key(replicate, b);
        let rows: Vec<usize> = if params.bootstrap {
            let mut rng = rng::from_seed(rng::derive(params.seed, tag::BOOTSTRAP, key));
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut counts = vec![0u32; n];
        for &i in &rows {
            counts[i] += 1;
        }
        let tree_params = TreeParams { nodesize: params.nodesize, mtry: params.mtry, seed: rng::derive(params.seed, tag::TREE, key) };
        Ok((grow_tree_on(&rows, responses, covariates, grid, tree_params)?, counts))
    };
    #[cfg(feature = "parallel")]
    let fitted: Vec<Result<(TreeModel, Vec<u32>)>> = {
        use rayon::prelude::*;
        (0..params.n_trees).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let fitted: Vec<Result<(TreeModel, Vec<u32>)>> = (0..params.n_trees).map(one).collect();
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut inbag = Vec::with_capacity(params.n_trees);
    for f in fitted {
        let (t, c) = f?;
        trees.push(t);
        inbag.push(c);
    }
    Ok((trees, inbag))
}

/// A forest grown directly on a response matrix, e.g. full-data indicators.
pub fn fit_on_responses(
    responses: &Matrix,
    covariates: &Matrix,
    grid: &TimeGrid,
    cause: u32,
    method: Method,
    params: &ForestParams,
) -> Result<ForestModel> {
    let (trees, inbag) = fit_forest_on(responses, covariates, grid, params, 0)?;
    Ok(ForestModel {
        trees,
        inbag,
        grid: grid.clone(),
        cause,
        method,
        meta: ForestMeta { replicates: 1, params: *params, nuisance: String::new() },
    })
}

/// Algorithm M0: impute once with `method`, then grow a bootstrap forest.
pub fn fit_m0(
    data: &Dataset,
    grid: &TimeGrid,
    cause: u32,
    method: Method,
    nuisance: &Nuisance<'_>,
    params: &ForestParams,
) -> Result<ForestFit> {
    if method == Method::DrXi {
        return Err(Error::Configuration("the randomized transform is fitted with fit_m1".into()));
    }
    let imputed = build_imputed_matrix(data, grid, nuisance, cause, method, None)?;
    let model = fit_on_responses(&imputed.values, data.covariates(), grid, cause, method, params)?;
    Ok(ForestFit { model, imputed: vec![imputed] })
}

/// Source of the Gaussian multipliers in [`fit_m1_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XiSource {
    /// Independent standard normals per subject and replicate.
    Gaussian,
    /// All multipliers zero; reduces the transform to IPCW.
    Zero,
}

/// The multipliers of replicate `replicate` for `n` subjects.
pub fn draw_xi(seed: u64, replicate: usize, n: usize) -> Vec<f64> {
    let mut rng = rng::from_seed(rng::derive(seed, tag::XI, replicate as u64));
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Algorithm M1 with `replicates` (`R`) draws of the multipliers.
pub fn fit_m1(
    data: &Dataset,
    grid: &TimeGrid,
    cause: u32,
    nuisance: &Nuisance<'_>,
    replicates: usize,
    params: &ForestParams,
) -> Result<ForestFit> {
    fit_m1_with(data, grid, cause, nuisance, replicates, params, XiSource::Gaussian)
}

pub fn fit_m1_with(
    data: &Dataset,
    grid: &TimeGrid,
    cause: u32,
    nuisance: &Nuisance<'_>,
    replicates: usize,
    params: &ForestParams,
    xi: XiSource,
) -> Result<ForestFit> {
    if replicates < 1 {
        return Err(Error::Parameter("M1 needs at least one replicate".into()));
    }
    params.check()?;
    let mut trees = Vec::with_capacity(replicates * params.n_trees);
    let mut inbag = Vec::with_capacity(replicates * params.n_trees);
    let mut imputed = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let multipliers = match xi {
            XiSource::Gaussian => draw_xi(params.seed, r, data.n()),
            XiSource::Zero => vec![0.0; data.n()],
        };
        let matrix = build_imputed_matrix(data, grid, nuisance, cause, Method::DrXi, Some(&multipliers))?;
        let (t, c) = fit_forest_on(&matrix.values, data.covariates(), grid, params, r)?;
        trees.extend(t);
        inbag.extend(c);
        imputed.push(matrix);
    }
    let model = ForestModel {
        trees,
        inbag,
        grid: grid.clone(),
        cause,
        method: Method::DrXi,
        meta: ForestMeta { replicates, params: *params, nuisance: String::new() },
    };
    Ok(ForestFit { model, imputed })
}

/// Mean of the tree predictions, optionally clamped into `[0, 1]`.
pub fn predict_forest(model: &ForestModel, w: &[f64], clamp: bool) -> Vec<f64> {
    let mut out = vec![0.0; model.grid.len()];
    for tree in &model.trees {
        for (o, v) in out.iter_mut().zip(predict_tree(tree, w)) {
            *o += v;
        }
    }
    let b = model.trees.len() as f64;
    for o in &mut out {
        *o /= b;
        if clamp {
            *o = num::clamp01(*o);
        }
    }
    out
}

/// Predictions for every row of `covariates`.
pub fn predict_rows(model: &ForestModel, covariates: &Matrix, clamp: bool) -> Matrix {
    let one = |i: usize| predict_forest(model, covariates.row(i), clamp);
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..covariates.nrows()).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..covariates.nrows()).map(one).collect();
    let mut out = Matrix::zeros(covariates.nrows(), model.grid.len());
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).copy_from_slice(r);
    }
    out
}

/// Out-of-bag loss with the rows it was computed on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OobError {
    pub error: f64,
    pub rows_used: usize,
    /// Rows that were in the bag of every tree.
    pub rows_skipped: usize,
}


/// Mean over rows of `sum_j w_j (oob_j - H_j)^2`, where `oob` averages the
/// unclamped predictions of trees that did not see the row.
pub fn oob_error(model: &ForestModel, imputed: &ImputedMatrix, covariates: &Matrix) -> Result<OobError> {
    oob_error_on(model, &imputed.values, covariates)
}

pub fn oob_error_on(model: &ForestModel, responses: &Matrix, covariates: &Matrix) -> Result<OobError> {
    if model.inbag.is_empty() {
        return Err(Error::Estimation("forest carries no in-bag records".into()));
    }
    let n = responses.nrows();
    if covariates.nrows() != n || model.inbag.iter().any(|c| c.len() != n) {
        return Err(Error::Configuration("in-bag records do not match the response rows".into()));
    }
    if responses.ncols() != model.grid.len() {
        return Err(Error::Configuration("response columns do not match the forest grid".into()));
    }
    let weights = model.grid.weights();
    let row_loss = |i: usize| -> Option<f64> {
        let mut pred = vec![0.0; weights.len()];
        let mut count = 0usize;
        for (tree, bag) in model.trees.iter().zip(&model.inbag) {
            if bag[i] == 0 {
                count += 1;
                for (p, v) in pred.iter_mut().zip(predict_tree(tree, covariates.row(i))) {
                    *p += v;
                }
            }
        }
        if count == 0 {
            return None;
        }
        let h = responses.row(i);
        Some(pred.iter().zip(h).zip(weights).map(|((p, h), w)| {
            let d = p / count as f64 - h;
            w * d * d
        }).sum())
    };
    #[cfg(feature = "parallel")]
    let losses: Vec<Option<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row_loss).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let losses: Vec<Option<f64>> = (0..n).map(row_loss).collect();
    let used: Vec<f64> = losses.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(Error::Estimation("no row is out of bag for any tree".into()));
    }
    Ok(OobError {
        error: used.iter().sum::<f64>() / used.len() as f64,
        rows_used: used.len(),
        rows_skipped: n - used.len(),
    })
}

/// One cell of a tuning grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneCell {
    pub nodesize: usize,
    pub mtry: usize,
    pub oob: OobError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub nodesize: usize,
    pub mtry: usize,
    pub table: Vec<TuneCell>,
}

/// Grid search of `(nodesize, mtry)` by OOB error on one imputed matrix.
///
/// Ties go to the larger nodesize, then the smaller mtry. The randomized
/// transform is tuned on its first replicate.
#[allow(clippy::too_many_arguments)]
pub fn tune(
    data: &Dataset,
    grid: &TimeGrid,
    cause: u32,
    method: Method,
    nuisance: &Nuisance<'_>,
    nodesizes: &[usize],
    mtrys: &[usize],
    base: &ForestParams,
) -> Result<TuneResult> {
    if nodesizes.is_empty() || mtrys.is_empty() {
        return Err(Error::Parameter("tuning grid is empty".into()));
    }
    if !base.bootstrap {
        return Err(Error::Configuration("OOB tuning needs bootstrap samples".into()));
    }
    let imputed = match method {
        Method::DrXi => {
            let xi = draw_xi(base.seed, 0, data.n());
            build_imputed_matrix(data, grid, nuisance, cause, method, Some(&xi))?
        }
        _ => build_imputed_matrix(data, grid, nuisance, cause, method, None)?,
    };
    let mut table = Vec::with_capacity(nodesizes.len() * mtrys.len());
    for &nodesize in nodesizes {
        for &mtry in mtrys {
            let params = ForestParams { nodesize, mtry, ..*base };
            let model = fit_on_responses(&imputed.values, data.covariates(), grid, cause, method, &params)?;
            let oob = oob_error(&model, &imputed, data.covariates())?;
            table.push(TuneCell { nodesize, mtry, oob });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| {
            a.oob
                .error
                .total_cmp(&b.oob.error)
                .then(b.nodesize.cmp(&a.nodesize))
                .then(a.mtry.cmp(&b.mtry))
        })
        .copied()
        .expect("non-empty grid");
    Ok(TuneResult { nodesize: best.nodesize, mtry: best.mtry, table })
}
