//! Scoring against known incidence and partial dependence.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::TimeGrid;
use crate::error::{Error, Result};
use crate::forest::{predict_forest, ForestModel};
use crate::matrix::Matrix;
use crate::nuisance::CifModel;

/// Per-time mean squared error of a forest against the true CIF.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub label: String,
    pub times: Vec<f64>,
    pub mse: Vec<f64>,
    pub n_test: usize,
    /// Whether predictions were clamped into `[0, 1]` before scoring.
    pub clamped: bool,
    /// Share of raw predictions that fell outside `[0, 1]`.
    pub out_of_range: f64,
}

/// `(1/n) sum_r (pred(w_r)_j - psi(t_j | w_r))^2` for every grid time, for an
/// arbitrary predictor.
pub fn mse_of<F>(predict: F, test: &Matrix, oracle: &dyn CifModel, cause: u32, grid: &TimeGrid) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if test.nrows() == 0 {
        return Err(Error::Parameter("no test rows".into()));
    }
    let one = |i: usize| -> Vec<f64> {
        let w = test.row(i);
        let pred = predict(w);
        let truth = oracle.at(w);
        grid.times().iter().zip(&pred).map(|(&t, p)| {
            let d = p - truth.cif(cause, t);
            d * d
        }).collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..test.nrows()).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..test.nrows()).map(one).collect();
    let mut sum = vec![0.0; grid.len()];
    for r in &rows {
        if r.len() != grid.len() {
            return Err(Error::Configuration("prediction length does not match the grid".into()));
        }
        for (s, v) in sum.iter_mut().zip(r) {
            *s += v;
        }
    }
    Ok(sum.into_iter().map(|s| s / test.nrows() as f64).collect())
}

/// Forest MSE against the oracle on `test`.
pub fn mse_vs_truth(model: &ForestModel, test: &Matrix, oracle: &dyn CifModel, clamp: bool) -> Result<Vec<f64>> {
    mse_of(|w| predict_forest(model, w, clamp), test, oracle, model.cause(), model.grid())
}

/// [`mse_vs_truth`] with out-of-range diagnostics.
pub fn evaluate(model: &ForestModel, test: &Matrix, oracle: &dyn CifModel, clamp: bool, label: impl Into<String>) -> Result<EvalReport> {
    let mse = mse_vs_truth(model, test, oracle, clamp)?;
    let mut outside = 0usize;
    for w in test.rows_iter() {
        outside += predict_forest(model, w, false).iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    }
    Ok(EvalReport {
        label: label.into(),
        times: model.grid().times().to_vec(),
        mse,
        n_test: test.nrows(),
        clamped: clamp,
        out_of_range: outside as f64 / (test.nrows() * model.grid().len()) as f64,
    })
}

/// Average prediction over `covariates` with column `variable` set to each of
/// `values`; row `k` of the result holds the full grid for `values[k]`.
pub fn partial_dependence_curves(model: &ForestModel, covariates: &Matrix, variable: usize, values: &[f64], clamp: bool) -> Result<Matrix> {
    if values.is_empty() {
        return Err(Error::Parameter("no partial dependence values".into()));
    }
    if covariates.nrows() == 0 {
        return Err(Error::Parameter("no covariate rows to average over".into()));
    }
    if variable >= covariates.ncols() {
        return Err(Error::Parameter(alloc::format!("variable {variable} out of range for {} covariates", covariates.ncols())));
    }
    let j = model.grid().len();
    let one = |v: f64| -> Vec<f64> {
        let mut acc = vec![0.0; j];
        let mut w = vec![0.0; covariates.ncols()];
        for row in covariates.rows_iter() {
            w.copy_from_slice(row);
            w[variable] = v;
            for (a, p) in acc.iter_mut().zip(predict_forest(model, &w, clamp)) {
                *a += p;
            }
        }
        acc.into_iter().map(|a| a / covariates.nrows() as f64).collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        values.par_iter().map(|&v| one(v)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = values.iter().map(|&v| one(v)).collect();
    Matrix::from_rows(&rows)
}

/// `(value, mean prediction at grid index time_index)` pairs.
pub fn partial_dependence(
    model: &ForestModel,
    covariates: &Matrix,
    variable: usize,
    values: &[f64],
    time_index: usize,
    clamp: bool,
) -> Result<Vec<(f64, f64)>> {
    check_time_index(model, time_index)?;
    let curves = partial_dependence_curves(model, covariates, variable, values, clamp)?;
    Ok(values.iter().enumerate().map(|(k, &v)| (v, curves[(k, time_index)])).collect())
}

fn check_time_index(model: &ForestModel, time_index: usize) -> Result<()> {
    if time_index >= model.grid().len() {
        return Err(Error::Parameter(alloc::format!("time index {time_index} out of range for {} grid times", model.grid().len())));
    }
    Ok(())
}

/// Partial dependence at each level of a categorical column, laid out with one
/// row per grid time and one column per level.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpTable {
    pub levels: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Matrix,
}

pub fn pdp_table_categorical(model: &ForestModel, covariates: &Matrix, variable: usize, levels: &[f64], clamp: bool) -> Result<PdpTable> {
    let curves = partial_dependence_curves(model, covariates, variable, levels, clamp)?;
    let times = model.grid().times().to_vec();
    let mut values = Matrix::zeros(times.len(), levels.len());
    for k in 0..levels.len() {
        for j in 0..times.len() {
            values[(j, k)] = curves[(k, j)];
        }
    }
    Ok(PdpTable { levels: levels.to_vec(), times, values })
}

/// `PDP_c(v) - PDP_u(v)` at one grid index, both averaged over `covariates`.
pub fn censored_vs_uncensored_diff(
    censored: &ForestModel,
    uncensored: &ForestModel,
    covariates: &Matrix,
    variable: usize,
    values: &[f64],
    time_index: usize,
    clamp: bool,
) -> Result<Vec<(f64, f64)>> {
    if censored.grid() != uncensored.grid() {
        return Err(Error::Configuration("the two forests use different time grids".into()));
    }
    let c = partial_dependence(censored, covariates, variable, values, time_index, clamp)?;
    let u = partial_dependence(uncensored, covariates, variable, values, time_index, clamp)?;
    Ok(c.iter().zip(&u).map(|(&(v, a), &(_, b))| (v, a - b)).collect())
}
