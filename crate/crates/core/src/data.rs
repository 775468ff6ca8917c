//! Observed competing-risks records, datasets and evaluation time grids.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// One subject's follow-up: observed time `min(T, C)`, the event indicator,
/// the observed cause (0 when censored) and baseline covariates.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObservedRecord {
    time: f64,
    delta: bool,
    cause: u32,
    covariates: Vec<f64>,
}

impl ObservedRecord {
    /// Builds a record from an observed time and a status code, where status
    /// 0 means censored and `m > 0` means an event of cause `m`.
    pub fn new(time: f64, cause: u32, covariates: Vec<f64>) -> Result<Self> {
        Self::with_delta(time, cause != 0, cause, covariates)
    }

    /// Builds a record with an explicit event indicator; it must agree with
    /// the cause code.
    pub fn with_delta(time: f64, delta: bool, cause: u32, covariates: Vec<f64>) -> Result<Self> {
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::validation(format!("follow-up time must be positive and finite, got {time}")));
        }
        if delta != (cause != 0) {
            return Err(Error::validation(format!(
                "event indicator {} inconsistent with cause {cause}",
                u8::from(delta)
            )));
        }
        if let Some(j) = covariates.iter().position(|x| !x.is_finite()) {
            return Err(Error::validation(format!("covariate {j} is not finite")));
        }
        Ok(ObservedRecord { time, delta, cause, covariates })
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn delta(&self) -> bool {
        self.delta
    }

    /// Observed cause, `M * Delta`: 0 for censored records.
    #[inline]
    pub fn cause(&self) -> u32 {
        self.cause
    }

    #[inline]
    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    /// `I(T~ <= t, M = m)` restricted to observed events.
    #[inline]
    pub fn observed_indicator(&self, t: f64, cause: u32) -> bool {
        self.delta && self.cause == cause && self.time <= t
    }
}

/// An immutable, validated collection of records sharing one covariate
/// dimension.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dataset {
    records: Vec<ObservedRecord>,
    k_causes: u32,
    covariate_names: Option<Vec<String>>,
    covariates: Matrix,
}

impl Dataset {
    /// Validates the records. `k_causes` bounds the cause codes.
    pub fn new(records: Vec<ObservedRecord>, k_causes: u32, covariate_names: Option<Vec<String>>) -> Result<Self> {
        let first = records.first().ok_or_else(|| Error::validation("dataset has no records"))?;
        let p = first.covariates.len();
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::at_row(i, format!("record has {} covariates, expected {p}", r.covariates.len())));
            }
            if r.cause > k_causes {
                return Err(Error::at_row(i, format!("cause {} exceeds the number of causes {k_causes}", r.cause)));
            }
        }
        if let Some(names) = &covariate_names {
            if names.len() != p {
                return Err(Error::validation(format!("{} covariate names for {p} covariates", names.len())));
            }
        }
        let covariates = Matrix::from_rows(&records.iter().map(|r| r.covariates.as_slice()).collect::<Vec<_>>())?;
        Ok(Dataset { records, k_causes, covariate_names, covariates })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    #[inline]
    pub fn k_causes(&self) -> u32 {
        self.k_causes
    }

    #[inline]
    pub fn records(&self) -> &[ObservedRecord] {
        &self.records
    }

    #[inline]
    pub fn record(&self, i: usize) -> &ObservedRecord {
        &self.records[i]
    }

    /// The n x p covariate matrix in record order.
    #[inline]
    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn covariate_names(&self) -> Option<&[String]> {
        self.covariate_names.as_deref()
    }

    pub fn censored_count(&self) -> usize {
        self.records.iter().filter(|r| !r.delta).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        self.censored_count() as f64 / self.n() as f64
    }

    /// A new dataset holding the records at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let records = rows.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(records, self.k_causes, self.covariate_names.clone())
    }

    /// A dataset with this one's cause count and covariate names but new records.
    pub fn with_records(&self, records: Vec<ObservedRecord>) -> Result<Dataset> {
        Dataset::new(records, self.k_causes, self.covariate_names.clone())
    }
}

/// Empirical quantiles of the observed event times (records with Delta = 1),
/// using the lower order statistic: the value at rank `ceil(n * q)`.
pub fn marginal_event_quantiles(data: &Dataset, probs: &[f64]) -> Result<Vec<f64>> {
    check_probs(probs)?;
    let mut times: Vec<f64> = data.records.iter().filter(|r| r.delta).map(|r| r.time).collect();
    if times.is_empty() {
        return Err(Error::Estimation("no uncensored records to take quantiles from".into()));
    }
    times.sort_by(f64::total_cmp);
    Ok(lower_quantiles(&times, probs))
}

pub(crate) fn check_probs(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Parameter("no quantile levels given".into()));
    }
    if probs.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::Parameter("quantile levels must lie in (0, 1)".into()));
    }
    if probs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("quantile levels must be strictly increasing".into()));
    }
    Ok(())
}

/// Lower-order-statistic quantiles of an already sorted sample.
pub(crate) fn lower_quantiles(sorted: &[f64], probs: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    probs
        .iter()
        .map(|&q| {
            let rank = libm::ceil(q * n as f64) as usize;
            sorted[rank.clamp(1, n) - 1]
        })
        .collect()
}

/// Evaluation times `t_1 < ... < t_J` with positive composite-loss weights
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TimeGrid {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Parameter("time grid is empty".into()));
        }
        if times.len() != weights.len() {
            return Err(Error::Parameter(format!("{} grid times but {} weights", times.len(), weights.len())));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Parameter("grid times must be positive and finite".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("grid times must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Parameter("grid weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("grid weights sum to {total}, expected 1")));
        }
        Ok(TimeGrid { times, weights })
    }

    /// Equal weights `1/J`.
    pub fn equal_weights(times: Vec<f64>) -> Result<Self> {
        let j = times.len().max(1);
        TimeGrid::new(times, alloc::vec![1.0 / j as f64; j])
    }

    #[inline]
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Diagonal of the composite-loss matrix `D`, `D_jj = n / w_j`.
    pub fn loss_diagonal(&self, n: usize) -> Vec<f64> {
        self.weights.iter().map(|w| n as f64 / w).collect()
    }
}
