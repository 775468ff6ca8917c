//! Imputed responses that turn censored observations into regression targets.
//!
//! For cause `m` and time `t` the doubly robust response of record `i` is
//! `H = TS1 + TS2` with
//!
//! * `TS1 = Delta I(T~ <= t, M = m) / G(T~-)`,
//! * `TS2 = (1 - Delta) y_m(T~; t) / G(T~) - sum_{u_k} y_m(u_k; t) h_k / G(u_k)`,
//!
//! the sum running over censoring-hazard jumps while the record is at risk.
//! Buckley-James is the same transform under `G = 1`, IPCW keeps `TS1` only,
//! and the randomized variant replaces the martingale integral with
//! `xi (1 - Delta) y_m(T~; t) / G(T~)` for a standard normal `xi`.

use alloc::vec::Vec;

use crate::censoring::{CensoringDistribution, NoCensoring};
use crate::data::{Dataset, ObservedRecord, TimeGrid};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nuisance::{conditional_incidence, CifCurve, CifModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    Ipcw,
    Bj,
    Dr,
    DrXi,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ipcw => "ipcw",
            Method::Bj => "bj",
            Method::Dr => "dr",
            Method::DrXi => "dr-xi",
        }
    }

    fn needs_censoring(self) -> bool {
        !matches!(self, Method::Bj)
    }

    fn needs_cif(self) -> bool {
        !matches!(self, Method::Ipcw)
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ipcw" => Ok(Method::Ipcw),
            "bj" => Ok(Method::Bj),
            "dr" => Ok(Method::Dr),
            "dr-xi" | "dr_xi" => Ok(Method::DrXi),
            other => Err(Error::Parameter(alloc::format!("unknown imputation method '{other}'"))),
        }
    }
}

/// The fitted models an imputation may need.
#[derive(Clone, Copy, Default)]
pub struct Nuisance<'a> {
    pub censoring: Option<&'a dyn CensoringDistribution>,
    pub cif: Option<&'a dyn CifModel>,
}

impl<'a> Nuisance<'a> {
    pub fn new(censoring: &'a dyn CensoringDistribution, cif: &'a dyn CifModel) -> Self {
        Nuisance { censoring: Some(censoring), cif: Some(cif) }
    }

    fn require(&self, method: Method) -> Result<()> {
        if method.needs_censoring() && self.censoring.is_none() {
            return Err(Error::Configuration(alloc::format!("method {} needs a censoring model", method.name())));
        }
        if method.needs_cif() && self.cif.is_none() {
            return Err(Error::Configuration(alloc::format!("method {} needs a nuisance CIF model", method.name())));
        }
        Ok(())
    }
}

/// A transform term with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Term {
    pub value: f64,
    /// A censoring survivor value was raised to the floor.
    pub g_clamped: bool,
    /// A `y_m` denominator hit the survival floor.
    pub y_floored: bool,
}

/// `Delta I(T~ <= t, M = m) / G(T~-)`.
pub fn ts1_event(record: &ObservedRecord, t: f64, g: &dyn CensoringDistribution, cause: u32) -> Term {
    if !record.delta() {
        return Term::default();
    }
    let (denom, g_clamped) = g.clamp(g.survivor_before(record.time(), record.covariates()));
    let z = if record.observed_indicator(t, cause) { 1.0 } else { 0.0 };
    Term { value: z / denom, g_clamped, y_floored: false }
}

/// The censoring-martingale augmentation `TS2` with `y_m` from `curve`
/// (the nuisance model bound to this record's covariates).
pub fn ts2_augmentation(
    record: &ObservedRecord,
    t: f64,
    g: &dyn CensoringDistribution,
    curve: &dyn CifCurve,
    cause: u32,
) -> Term {
    let w = record.covariates();
    let time = record.time();
    let mut out = Term::default();
    if !record.delta() {
        let (denom, clamped) = g.clamp(g.survivor_after(time, w));
        let c = conditional_incidence(curve, time, t, cause);
        out.g_clamped |= clamped;
        out.y_floored |= c.floored;
        out.value = c.value / denom;
    }
    // y_m(u; t) vanishes for u > t, so the integral stops at min(T~, t). An
    // observed failure leaves the censoring risk set before a tied jump.
    let (upper, inclusive) = if t < time { (t, true) } else { (time, !record.delta()) };
    let mut floored = false;
    let comp = g.compensator(w, upper, inclusive, &mut |u| {
        let c = conditional_incidence(curve, u, t, cause);
        floored |= c.floored;
        c.value
    });
    out.value -= comp.value;
    out.g_clamped |= comp.clamped;
    out.y_floored |= floored;
    out
}

/// `xi (1 - Delta) y_m(T~; t) / G(T~)`.
pub fn ts2_randomized(
    record: &ObservedRecord,
    t: f64,
    g: &dyn CensoringDistribution,
    curve: &dyn CifCurve,
    cause: u32,
    xi: f64,
) -> Term {
    if record.delta() {
        return Term::default();
    }
    let (denom, g_clamped) = g.clamp(g.survivor_after(record.time(), record.covariates()));
    let c = conditional_incidence(curve, record.time(), t, cause);
    Term { value: xi * c.value / denom, g_clamped, y_floored: c.floored }
}

/// `TS1^0 + TS2^0`, the denominator of the ratio-form node estimator. Equal
/// to one when no survivor value is clamped.
pub fn ts0_total(record: &ObservedRecord, g: &dyn CensoringDistribution) -> Term {
    let w = record.covariates();
    let time = record.time();
    let (surv, inclusive) = if record.delta() {
        (g.survivor_before(time, w), false)
    } else {
        (g.survivor_after(time, w), true)
    };
    let (denom, clamped) = g.clamp(surv);
    let comp = g.compensator(w, time, inclusive, &mut |_| 1.0);
    Term { value: 1.0 / denom - comp.value, g_clamped: clamped || comp.clamped, y_floored: false }
}

/// Both terms of one imputed response.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Imputed {
    pub ts1: Term,
    pub ts2: Term,
}

impl Imputed {
    pub fn value(&self) -> f64 {
        self.ts1.value + self.ts2.value
    }
}

fn impute_with_curve(
    record: &ObservedRecord,
    t: f64,
    g: Option<&dyn CensoringDistribution>,
    curve: Option<&dyn CifCurve>,
    cause: u32,
    method: Method,
    xi: Option<f64>,
) -> Imputed {
    let none = NoCensoring;
    match method {
        Method::Ipcw => Imputed { ts1: ts1_event(record, t, g.unwrap(), cause), ts2: Term::default() },
        Method::Bj => Imputed {
            ts1: ts1_event(record, t, &none, cause),
            ts2: ts2_augmentation(record, t, &none, curve.unwrap(), cause),
        },
        Method::Dr => {
            let g = g.unwrap();
            Imputed { ts1: ts1_event(record, t, g, cause), ts2: ts2_augmentation(record, t, g, curve.unwrap(), cause) }
        }
        Method::DrXi => {
            let g = g.unwrap();
            Imputed {
                ts1: ts1_event(record, t, g, cause),
                ts2: ts2_randomized(record, t, g, curve.unwrap(), cause, xi.unwrap()),
            }
        }
    }
}

fn check_xi(method: Method, xi_given: bool) -> Result<()> {
    match (method, xi_given) {
        (Method::DrXi, false) => Err(Error::Configuration("method dr-xi needs xi multipliers".into())),
        (Method::DrXi, true) | (_, false) => Ok(()),
        (_, true) => Err(Error::Configuration(alloc::format!("xi multipliers given for method {}", method.name()))),
    }
}

/// One imputed response `H_m(t; O_i)`.
pub fn h_value(
    record: &ObservedRecord,
    t: f64,
    nuisance: &Nuisance<'_>,
    cause: u32,
    method: Method,
    xi: Option<f64>,
) -> Result<f64> {
    nuisance.require(method)?;
    check_xi(method, xi.is_some())?;
    let curve = nuisance.cif.map(|m| m.at(record.covariates()));
    Ok(impute_with_curve(record, t, nuisance.censoring, curve.as_deref(), cause, method, xi).value())
}

/// Per-row truncation and identity diagnostics of an imputation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    /// `TS1` per row and grid time.
    pub ts1: Matrix,
    /// `TS2` (or its randomized replacement) per row and grid time.
    pub ts2: Matrix,
    /// Whether any censoring survivor value for the row was floored.
    pub g_clamped: Vec<bool>,
    /// Whether any `y_m` evaluation for the row hit the survival floor.
    pub y_floored: Vec<bool>,
    /// `TS1^0 + TS2^0` per row (1 for Buckley-James, whose `G` is 1).
    pub ts0: Vec<f64>,
}

impl Diagnostics {
    pub fn g_clamp_fraction(&self) -> f64 {
        fraction(&self.g_clamped)
    }

    pub fn y_floor_fraction(&self) -> f64 {
        fraction(&self.y_floored)
    }

    /// Largest `|TS1^0 + TS2^0 - 1|` over rows.
    pub fn max_identity_residual(&self) -> f64 {
        self.ts0.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max)
    }
}

fn fraction(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        0.0
    } else {
        flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
    }
}

/// An n x J matrix of imputed responses over a grid.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImputedMatrix {
    pub values: Matrix,
    pub method: Method,
    pub cause: u32,
    pub grid: TimeGrid,
    pub diagnostics: Diagnostics,
}

struct Row {
    ts1: Vec<f64>,
    ts2: Vec<f64>,
    g_clamped: bool,
    y_floored: bool,
    ts0: f64,
}

fn impute_row(
    record: &ObservedRecord,
    grid: &TimeGrid,
    nuisance: &Nuisance<'_>,
    cause: u32,
    method: Method,
    xi: Option<f64>,
) -> Row {
    let curve = nuisance.cif.filter(|_| method.needs_cif()).map(|m| m.at(record.covariates()));
    let g = nuisance.censoring.filter(|_| method.needs_censoring());
    let j = grid.len();
    let mut row = Row { ts1: Vec::with_capacity(j), ts2: Vec::with_capacity(j), g_clamped: false, y_floored: false, ts0: 1.0 };
    for &t in grid.times() {
        let imp = impute_with_curve(record, t, g, curve.as_deref(), cause, method, xi);
        row.g_clamped |= imp.ts1.g_clamped || imp.ts2.g_clamped;
        row.y_floored |= imp.ts1.y_floored || imp.ts2.y_floored;
        row.ts1.push(imp.ts1.value);
        row.ts2.push(imp.ts2.value);
    }
    if let Some(g) = g {
        let ts0 = ts0_total(record, g);
        row.g_clamped |= ts0.g_clamped;
        row.ts0 = ts0.value;
    }
    row
}

/// Imputes every record at every grid time. Rows are computed in parallel
/// with the `parallel` feature and always assembled in record order.
pub fn build_imputed_matrix(
    data: &Dataset,
    grid: &TimeGrid,
    nuisance: &Nuisance<'_>,
    cause: u32,
    method: Method,
    xi: Option<&[f64]>,
) -> Result<ImputedMatrix> {
    nuisance.require(method)?;
    check_xi(method, xi.is_some())?;
    if let Some(xi) = xi {
        if xi.len() != data.n() {
            return Err(Error::Configuration(alloc::format!("{} xi values for {} records", xi.len(), data.n())));
        }
    }
    if cause == 0 || cause > data.k_causes() {
        return Err(Error::Parameter(alloc::format!("cause {cause} outside 1..={}", data.k_causes())));
    }
    let row = |i: usize| impute_row(data.record(i), grid, nuisance, cause, method, xi.map(|x| x[i]));
    #[cfg(feature = "parallel")]
    let rows: Vec<Row> = {
        use rayon::prelude::*;
        (0..data.n()).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Row> = (0..data.n()).map(row).collect();

    let (n, j) = (data.n(), grid.len());
    let mut values = Matrix::zeros(n, j);
    let mut ts1 = Matrix::zeros(n, j);
    let mut ts2 = Matrix::zeros(n, j);
    let mut g_clamped = Vec::with_capacity(n);
    let mut y_floored = Vec::with_capacity(n);
    let mut ts0 = Vec::with_capacity(n);
    for (i, r) in rows.into_iter().enumerate() {
        for k in 0..j {
            values[(i, k)] = r.ts1[k] + r.ts2[k];
        }
        ts1.row_mut(i).copy_from_slice(&r.ts1);
        ts2.row_mut(i).copy_from_slice(&r.ts2);
        g_clamped.push(r.g_clamped);
        y_floored.push(r.y_floored);
        ts0.push(r.ts0);
    }
    Ok(ImputedMatrix {
        values,
        method,
        cause,
        grid: grid.clone(),
        diagnostics: Diagnostics { ts1, ts2, g_clamped, y_floored, ts0 },
    })
}

/// Full-data responses `I(T <= t_j, M = m)`, which every transform reduces to
/// when nothing is censored.
pub fn full_data_responses(data: &Dataset, grid: &TimeGrid, cause: u32) -> Matrix {
    let mut z = Matrix::zeros(data.n(), grid.len());
    for (i, r) in data.records().iter().enumerate() {
        for (k, &t) in grid.times().iter().enumerate() {
            z[(i, k)] = if r.observed_indicator(t, cause) { 1.0 } else { 0.0 };
        }
    }
    z
}

impl ImputedMatrix {
    /// Node estimate as the mean of the imputed responses over `rows`.
    pub fn node_mean(&self, rows: &[usize]) -> Vec<f64> {
        let j = self.values.ncols();
        let mut out = alloc::vec![0.0; j];
        for &i in rows {
            for (o, v) in out.iter_mut().zip(self.values.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= rows.len() as f64);
        out
    }

    /// Node estimate in ratio form, `sum(TS1 + TS2) / sum(TS1^0 + TS2^0)`.
    pub fn node_ratio(&self, rows: &[usize]) -> Vec<f64> {
        let j = self.values.ncols();
        let mut numer = alloc::vec![0.0; j];
        let mut denom = 0.0;
        for &i in rows {
            for (o, (a, b)) in numer.iter_mut().zip(self.diagnostics.ts1.row(i).iter().zip(self.diagnostics.ts2.row(i))) {
                *o += a + b;
            }
            denom += self.diagnostics.ts0[i];
        }
        numer.iter_mut().for_each(|o| *o /= denom);
        numer
    }
}
