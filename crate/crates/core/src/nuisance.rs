//! Nuisance cumulative-incidence models `Psi` used by the augmentation terms.
//!
//! A model is bound to one covariate vector with [`CifModel::at`]; the bound
//! [`CifCurve`] answers `psi_m(t)`, its left limit and the all-cause survival
//! `P(T >= u)`, from which [`conditional_incidence`] forms
//! `y_m(u; t) = P(u <= T <= t, M = m | T >= u)`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, TimeGrid};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, ForestParams};
use crate::imputation::{Method, Nuisance};
use crate::num;

/// Survival values at or below this floor are treated as exhausted when
/// forming `y_m`.
pub const SURVIVAL_FLOOR: f64 = 1e-6;

/// Cumulative incidence curves for one covariate vector.
pub trait CifCurve {
    /// `psi_m(t)`.
    fn cif(&self, cause: u32, t: f64) -> f64;

    /// `psi_m(t-)`.
    fn cif_before(&self, cause: u32, t: f64) -> f64;

    /// `P(T >= u)`.
    fn survival_before(&self, u: f64) -> f64;
}

/// A model for the cumulative incidence functions of all causes.
pub trait CifModel: Sync {
    fn n_causes(&self) -> u32;

    fn at<'a>(&'a self, w: &'a [f64]) -> Box<dyn CifCurve + 'a>;
}

/// `y_m(u; t)` with its floor diagnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditional {
    pub value: f64,
    /// The survival denominator was at or below [`SURVIVAL_FLOOR`].
    pub floored: bool,
}

/// `y_m(u; t) = (psi_m(t) - psi_m(u-)) / P(T >= u)` for `u <= t`, 0 otherwise,
/// clamped into `[0, 1]`.
pub fn conditional_incidence(curve: &dyn CifCurve, u: f64, t: f64, cause: u32) -> Conditional {
    if u > t {
        return Conditional { value: 0.0, floored: false };
    }
    let numer = curve.cif(cause, t) - curve.cif_before(cause, u);
    let surv = curve.survival_before(u);
    let floored = surv <= SURVIVAL_FLOOR;
    let value = if floored {
        num::clamp01(numer / SURVIVAL_FLOOR)
    } else {
        num::clamp01(numer / surv)
    };
    Conditional { value, floored }
}

/// Convenience form of [`conditional_incidence`] on an unbound model.
pub fn y_m(model: &dyn CifModel, u: f64, t: f64, w: &[f64], cause: u32) -> Conditional {
    conditional_incidence(&*model.at(w), u, t, cause)
}

// ---------------------------------------------------------------------------
// Aalen-Johansen
// ---------------------------------------------------------------------------

/// Marginal Aalen-Johansen estimate; covariates are ignored.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AalenJohansen {
    /// Distinct observed event times.
    times: Vec<f64>,
    /// `cif[m - 1][k]` is `psi_m` just after `times[k]`.
    cif: Vec<Vec<f64>>,
    /// All-cause Kaplan-Meier survival just after `times[k]`.
    survival: Vec<f64>,
}

/// Fits the marginal Aalen-Johansen estimator. Censorings tied with events
/// stay in the risk set at that time.
pub fn fit_aalen_johansen(data: &Dataset) -> AalenJohansen {
    let k = data.k_causes() as usize;
    let mut obs: Vec<(f64, u32)> = data.records().iter().map(|r| (r.time(), r.cause())).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = obs.len();
    let mut times = Vec::new();
    let mut cif: Vec<Vec<f64>> = vec![Vec::new(); k];
    let mut survival = Vec::new();
    let mut current = vec![0.0; k];
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let t = obs[i].0;
        let at_risk = n - i;
        let mut j = i;
        let mut deaths = vec![0usize; k];
        while j < n && obs[j].0 == t {
            if obs[j].1 > 0 {
                deaths[obs[j].1 as usize - 1] += 1;
            }
            j += 1;
        }
        let total: usize = deaths.iter().sum();
        if total > 0 {
            for (c, &d) in current.iter_mut().zip(&deaths) {
                *c += surv * d as f64 / at_risk as f64;
            }
            surv *= 1.0 - total as f64 / at_risk as f64;
            times.push(t);
            for (col, &c) in cif.iter_mut().zip(&current) {
                col.push(c);
            }
            survival.push(surv);
        }
        i = j;
    }
    AalenJohansen { times, cif, survival }
}

impl AalenJohansen {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn step(values: &[f64], count: usize) -> f64 {
        match count {
            0 => 0.0,
            c => values[c - 1],
        }
    }

    pub fn cif_value(&self, cause: u32, t: f64) -> f64 {
        match self.cif.get(cause as usize - 1) {
            Some(col) => Self::step(col, self.times.partition_point(|&s| s <= t)),
            None => 0.0,
        }
    }

    pub fn cif_before(&self, cause: u32, t: f64) -> f64 {
        match self.cif.get(cause as usize - 1) {
            Some(col) => Self::step(col, self.times.partition_point(|&s| s < t)),
            None => 0.0,
        }
    }

    /// Kaplan-Meier `P(T > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            c => self.survival[c - 1],
        }
    }

    /// Kaplan-Meier `P(T >= u)`.
    pub fn survival_before(&self, u: f64) -> f64 {
        match self.times.partition_point(|&s| s < u) {
            0 => 1.0,
            c => self.survival[c - 1],
        }
    }
}

impl CifCurve for AalenJohansen {
    fn cif(&self, cause: u32, t: f64) -> f64 {
        self.cif_value(cause, t)
    }

    fn cif_before(&self, cause: u32, t: f64) -> f64 {
        AalenJohansen::cif_before(self, cause, t)
    }

    fn survival_before(&self, u: f64) -> f64 {
        AalenJohansen::survival_before(self, u)
    }
}

impl CifModel for AalenJohansen {
    fn n_causes(&self) -> u32 {
        self.cif.len() as u32
    }

    fn at<'a>(&'a self, _: &'a [f64]) -> Box<dyn CifCurve + 'a> {
        Box::new(self)
    }
}

impl<T: CifCurve + ?Sized> CifCurve for &T {
    fn cif(&self, cause: u32, t: f64) -> f64 {
        (**self).cif(cause, t)
    }

    fn cif_before(&self, cause: u32, t: f64) -> f64 {
        (**self).cif_before(cause, t)
    }

    fn survival_before(&self, u: f64) -> f64 {
        (**self).survival_before(u)
    }
}

// ---------------------------------------------------------------------------
// Parametric Fine-Gray-type model
// ---------------------------------------------------------------------------

/// Number of components in the covariate transform `Z(W)`.
pub const Z_DIM: usize = 6;

/// Minimum covariate dimension the transform reads (it uses `W_15`).
pub const MIN_COVARIATES: usize = 15;

/// Two-cause parametric model
///
/// `psi_1(t | w) = 1 - (1 - p (1 - e^{-t}))^{exp(b1' Z)}`,
/// `psi_2(t | w) = (1 - p)^{exp(b1' Z)} (1 - exp(-t exp(b2' Z)))`,
///
/// with `Z(W) = (sin(pi W1 W2), W3^2, W10, I(W11 > 0), W12, exp(W15))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParametricFineGray {
    p: f64,
    beta1: [f64; Z_DIM],
    beta2: [f64; Z_DIM],
}

impl ParametricFineGray {
    pub fn new(p: f64, beta1: [f64; Z_DIM], beta2: [f64; Z_DIM]) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(alloc::format!("Fine-Gray mass p must lie in (0, 1), got {p}")));
        }
        if beta1.iter().chain(&beta2).any(|b| !b.is_finite()) {
            return Err(Error::Parameter("Fine-Gray coefficients must be finite".into()));
        }
        Ok(ParametricFineGray { p, beta1, beta2 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta1(&self) -> &[f64; Z_DIM] {
        &self.beta1
    }

    pub fn beta2(&self) -> &[f64; Z_DIM] {
        &self.beta2
    }

    pub fn transform(w: &[f64]) -> [f64; Z_DIM] {
        assert!(w.len() >= MIN_COVARIATES, "the Fine-Gray transform needs at least {MIN_COVARIATES} covariates");
        [
            num::sin(core::f64::consts::PI * w[0] * w[1]),
            w[2] * w[2],
            w[9],
            if w[10] > 0.0 { 1.0 } else { 0.0 },
            w[11],
            num::exp(w[14]),
        ]
    }

    /// Linear predictors `(exp(b1' Z), exp(b2' Z))`.
    pub fn rates(&self, w: &[f64]) -> (f64, f64) {
        let z = Self::transform(w);
        let dot = |b: &[f64; Z_DIM]| b.iter().zip(&z).map(|(b, z)| b * z).sum::<f64>();
        (num::exp(dot(&self.beta1)), num::exp(dot(&self.beta2)))
    }

    /// `P(M = 1 | w)`, the limit of `psi_1` as `t -> inf`.
    pub fn cause1_mass(&self, eta1: f64) -> f64 {
        -num::exp_m1(eta1 * num::ln_1p(-self.p))
    }

    pub fn bind(&self, w: &[f64]) -> FineGrayCurve {
        let (eta1, eta2) = self.rates(w);
        FineGrayCurve { p: self.p, eta1, eta2 }
    }

    pub fn cif(&self, cause: u32, t: f64, w: &[f64]) -> f64 {
        self.bind(w).cif(cause, t)
    }
}

/// [`ParametricFineGray`] evaluated at one covariate vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineGrayCurve {
    pub p: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl CifCurve for FineGrayCurve {
    fn cif(&self, cause: u32, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match cause {
            // 1 - (1 - p(1 - e^{-t}))^eta1
            1 => -num::exp_m1(self.eta1 * num::ln_1p(self.p * num::exp_m1(-t))),
            // (1 - p)^eta1 (1 - e^{-t eta2})
            2 => num::exp(self.eta1 * num::ln_1p(-self.p)) * -num::exp_m1(-t * self.eta2),
            _ => 0.0,
        }
    }

    fn cif_before(&self, cause: u32, t: f64) -> f64 {
        self.cif(cause, t)
    }

    fn survival_before(&self, u: f64) -> f64 {
        (1.0 - self.cif(1, u) - self.cif(2, u)).max(0.0)
    }
}

impl CifModel for ParametricFineGray {
    fn n_causes(&self) -> u32 {
        2
    }

    fn at<'a>(&'a self, w: &'a [f64]) -> Box<dyn CifCurve + 'a> {
        Box::new(self.bind(w))
    }
}

// ---------------------------------------------------------------------------
// Forest-based nuisance
// ---------------------------------------------------------------------------

/// Cumulative incidence from one fitted forest per cause, read as a
/// right-continuous step function over the forest grid, with all-cause
/// survival taken from the marginal Kaplan-Meier curve.
#[derive(Debug, Clone)]
pub struct ForestCif {
    forests: Vec<ForestModel>,
    marginal: AalenJohansen,
}

impl ForestCif {
    /// `forests[m - 1]` must be the forest for cause `m`; all share one grid.
    pub fn new(forests: Vec<ForestModel>, marginal: AalenJohansen) -> Result<Self> {
        let Some(first) = forests.first() else {
            return Err(Error::Configuration("forest nuisance needs at least one forest".into()));
        };
        for (i, f) in forests.iter().enumerate() {
            if f.cause() != i as u32 + 1 {
                return Err(Error::Configuration("forests must be ordered by cause starting at 1".into()));
            }
            if f.grid() != first.grid() {
                return Err(Error::Configuration("forest nuisance grids differ".into()));
            }
        }
        Ok(ForestCif { forests, marginal })
    }

    pub fn forests(&self) -> &[ForestModel] {
        &self.forests
    }
}

/// [`ForestCif`] evaluated at one covariate vector.
pub struct ForestCifCurve<'a> {
    times: &'a [f64],
    /// Clamped forest predictions per cause over the grid.
    predictions: Vec<Vec<f64>>,
    marginal: &'a AalenJohansen,
}

impl CifCurve for ForestCifCurve<'_> {
    fn cif(&self, cause: u32, t: f64) -> f64 {
        let Some(pred) = self.predictions.get(cause as usize - 1) else { return 0.0 };
        match self.times.partition_point(|&s| s <= t) {
            0 => 0.0,
            k => pred[k - 1],
        }
    }

    fn cif_before(&self, cause: u32, t: f64) -> f64 {
        let Some(pred) = self.predictions.get(cause as usize - 1) else { return 0.0 };
        match self.times.partition_point(|&s| s < t) {
            0 => 0.0,
            k => pred[k - 1],
        }
    }

    fn survival_before(&self, u: f64) -> f64 {
        self.marginal.survival_before(u)
    }
}

impl CifModel for ForestCif {
    fn n_causes(&self) -> u32 {
        self.forests.len() as u32
    }

    fn at<'a>(&'a self, w: &'a [f64]) -> Box<dyn CifCurve + 'a> {
        Box::new(ForestCifCurve {
            times: self.forests[0].grid().times(),
            predictions: self.forests.iter().map(|f| forest::predict_forest(f, w, true)).collect(),
            marginal: &self.marginal,
        })
    }
}

/// First pass of the iterated nuisance: Buckley-James forests for every
/// cause using the marginal Aalen-Johansen nuisance, wrapped as a
/// [`ForestCif`].
pub fn fit_forest_cif(data: &Dataset, grid: &TimeGrid, params: &ForestParams) -> Result<ForestCif> {
    let marginal = fit_aalen_johansen(data);
    let nuisance = Nuisance { censoring: None, cif: Some(&marginal) };
    let forests = (1..=data.k_causes())
        .map(|cause| forest::fit_m0(data, grid, cause, Method::Bj, &nuisance, params).map(|fit| fit.model))
        .collect::<Result<Vec<_>>>()?;
    ForestCif::new(forests, marginal)
}
