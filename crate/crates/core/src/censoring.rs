//! Censoring survivor models `G(u | w) = P(C >= u | W = w)`.
//!
//! Fitted models are step functions: a reverse Kaplan-Meier curve, either
//! marginal or one per terminal node of a censoring tree. Evaluations
//! distinguish the left limit `P(C >= u)` (used for the event term of the
//! IPCW weight) from the post-jump value `P(C > u)` (used for censored records
//! and inside the martingale integral), which makes
//! `Delta / G(T~-) + (1 - Delta) / G(T~) - sum_{u_k} h_k / G(u_k) = 1`
//! hold exactly for every record.

use alloc::vec::Vec;

use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::num;

/// Default truncation floor for survivor evaluations.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Default minimum node size for censoring trees.
pub const DEFAULT_MIN_NODE: usize = 30;

/// One censoring-hazard jump: time, hazard increment and the survivor value
/// just after the jump.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HazardJump {
    pub time: f64,
    pub hazard: f64,
    pub survivor: f64,
}

/// Product-limit curve for the censoring time.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HazardCurve {
    jumps: Vec<HazardJump>,
}

impl HazardCurve {
    /// Reverse Kaplan-Meier: censorings are the events, observed failures are
    /// the censorings. At a time shared by failures and censorings the
    /// failures leave the risk set first.
    pub fn reverse_km<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = &'a ObservedRecord>,
    {
        let mut obs: Vec<(f64, bool)> = records.into_iter().map(|r| (r.time(), r.delta())).collect();
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = obs.len();
        let mut jumps = Vec::new();
        let mut survivor = 1.0;
        let mut i = 0;
        while i < n {
            let t = obs[i].0;
            let mut j = i;
            let mut censored = 0usize;
            while j < n && obs[j].0 == t {
                if !obs[j].1 {
                    censored += 1;
                }
                j += 1;
            }
            if censored > 0 {
                // at risk: everyone with time > t, plus the censorings at t
                let at_risk = (n - j) + censored;
                let hazard = censored as f64 / at_risk as f64;
                survivor *= 1.0 - hazard;
                jumps.push(HazardJump { time: t, hazard, survivor });
            }
            i = j;
        }
        HazardCurve { jumps }
    }

    /// Builds a curve from jump times and hazard increments.
    pub fn from_increments(times: &[f64], hazards: &[f64]) -> Result<Self> {
        if times.len() != hazards.len() {
            return Err(Error::Configuration("jump times and hazards differ in length".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) || times.iter().any(|t| t.is_nan() || *t <= 0.0) {
            return Err(Error::validation("jump times must be positive and strictly increasing"));
        }
        let mut survivor = 1.0;
        let mut jumps = Vec::with_capacity(times.len());
        for (&time, &hazard) in times.iter().zip(hazards) {
            if !(0.0..=1.0).contains(&hazard) {
                return Err(Error::validation("hazard increments must lie in [0, 1]"));
            }
            survivor *= 1.0 - hazard;
            jumps.push(HazardJump { time, hazard, survivor });
        }
        Ok(HazardCurve { jumps })
    }

    pub fn jumps(&self) -> &[HazardJump] {
        &self.jumps
    }

    /// Number of jumps with time `< u`.
    fn count_before(&self, u: f64) -> usize {
        self.jumps.partition_point(|j| j.time < u)
    }

    /// Number of jumps with time `<= u`.
    fn count_upto(&self, u: f64) -> usize {
        self.jumps.partition_point(|j| j.time <= u)
    }

    /// `P(C >= u)`, excluding a jump at `u`.
    pub fn survivor_before(&self, u: f64) -> f64 {
        match self.count_before(u) {
            0 => 1.0,
            k => self.jumps[k - 1].survivor,
        }
    }

    /// `P(C > u)`, including a jump at `u`.
    pub fn survivor_after(&self, u: f64) -> f64 {
        match self.count_upto(u) {
            0 => 1.0,
            k => self.jumps[k - 1].survivor,
        }
    }

    /// Jumps with time `<= horizon`.
    pub fn path_upto(&self, horizon: f64) -> &[HazardJump] {
        &self.jumps[..self.count_upto(horizon)]
    }

    /// Jumps with time `< horizon`.
    pub fn path_before(&self, horizon: f64) -> &[HazardJump] {
        &self.jumps[..self.count_before(horizon)]
    }
}

/// Result of a martingale-compensator integral.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Compensator {
    pub value: f64,
    /// Whether any survivor value in a denominator was raised to the floor.
    pub clamped: bool,
}

/// A censoring survivor function usable by the imputation transforms.
pub trait CensoringDistribution: Sync {
    /// Truncation floor applied to survivor values used as denominators.
    fn epsilon(&self) -> f64;

    /// Unclamped `P(C >= u | w)`.
    fn survivor_before(&self, u: f64, w: &[f64]) -> f64;

    /// Unclamped `P(C > u | w)`.
    fn survivor_after(&self, u: f64, w: &[f64]) -> f64;

    /// `integral over (0, upper] of f(u) / G(u | w) dLambda_G(u | w)`, where
    /// `G(u)` is the post-jump survivor value clamped to the floor. With
    /// `include_upper = false` the integral is over `(0, upper)`.
    fn compensator(&self, w: &[f64], upper: f64, include_upper: bool, f: &mut dyn FnMut(f64) -> f64) -> Compensator;

    /// Applies the floor, reporting whether it was active.
    fn clamp(&self, g: f64) -> (f64, bool) {
        let eps = self.epsilon();
        if g < eps {
            (eps, true)
        } else {
            (g, false)
        }
    }
}

/// Terminal-node layout of a censoring tree; leaves hold product-limit curves.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "node", rename_all = "snake_case"))]
pub enum CensoringNode {
    Split { variable: usize, threshold: f64, left: usize, right: usize },
    Leaf { curve: HazardCurve, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum CensoringKind {
    Marginal { curve: HazardCurve },
    Tree { nodes: Vec<CensoringNode> },
}

/// A fitted step-function censoring model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CensoringModel {
    pub kind: CensoringKind,
    pub epsilon: f64,
}

/// Marginal reverse Kaplan-Meier fit.
pub fn fit_reverse_km(data: &Dataset) -> CensoringModel {
    CensoringModel {
        kind: CensoringKind::Marginal { curve: HazardCurve::reverse_km(data.records()) },
        epsilon: DEFAULT_EPSILON,
    }
}

/// Censoring tree grown by exponential-deviance reduction with the censoring
/// indicator as the event. Each terminal node stores the reverse
/// Kaplan-Meier curve of its records.
pub fn fit_censoring_tree(data: &Dataset, min_node: usize) -> Result<CensoringModel> {
    if min_node < 1 {
        return Err(Error::Parameter("censoring tree min_node must be at least 1".into()));
    }
    let mut nodes = Vec::new();
    let rows: Vec<usize> = (0..data.n()).collect();
    grow_censoring_node(data, rows, min_node, &mut nodes);
    Ok(CensoringModel { kind: CensoringKind::Tree { nodes }, epsilon: DEFAULT_EPSILON })
}

fn xlogx_rate(events: f64, exposure: f64) -> f64 {
    if events == 0.0 {
        0.0
    } else {
        events * num::ln(events / exposure)
    }
}

struct CensoringSplit {
    variable: usize,
    threshold: f64,
    gain: f64,
}

/// Best split of `rows` by exponential-model likelihood-ratio deviance.
fn best_censoring_split(data: &Dataset, rows: &[usize], min_node: usize) -> Option<CensoringSplit> {
    let n = rows.len();
    if n < 2 * min_node {
        return None;
    }
    let recs = data.records();
    let event = |i: usize| if recs[i].delta() { 0.0 } else { 1.0 };
    let total_events: f64 = rows.iter().map(|&i| event(i)).sum();
    if total_events == 0.0 {
        return None;
    }
    let total_exposure: f64 = rows.iter().map(|&i| recs[i].time()).sum();
    let parent = xlogx_rate(total_events, total_exposure);
    let x = data.covariates();
    let mut best: Option<CensoringSplit> = None;
    let mut order = rows.to_vec();
    for var in 0..data.p() {
        order.sort_by(|&a, &b| x[(a, var)].total_cmp(&x[(b, var)]).then(a.cmp(&b)));
        let (mut d_left, mut s_left) = (0.0, 0.0);
        for k in 0..n - 1 {
            let i = order[k];
            d_left += event(i);
            s_left += recs[i].time();
            let (lo, hi) = (x[(i, var)], x[(order[k + 1], var)]);
            let left_n = k + 1;
            if lo == hi || left_n < min_node || n - left_n < min_node {
                continue;
            }
            let gain = 2.0
                * (xlogx_rate(d_left, s_left)
                    + xlogx_rate(total_events - d_left, total_exposure - s_left)
                    - parent);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(CensoringSplit { variable: var, threshold: midpoint(lo, hi), gain });
            }
        }
    }
    best.filter(|b| b.gain > 1e-10 * (1.0 + total_events))
}

pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

fn grow_censoring_node(data: &Dataset, rows: Vec<usize>, min_node: usize, nodes: &mut Vec<CensoringNode>) -> usize {
    let id = nodes.len();
    let Some(split) = best_censoring_split(data, &rows, min_node) else {
        let curve = HazardCurve::reverse_km(rows.iter().map(|&i| data.record(i)));
        nodes.push(CensoringNode::Leaf { curve, count: rows.len() });
        return id;
    };
    nodes.push(CensoringNode::Leaf { curve: HazardCurve::default(), count: 0 });
    let x = data.covariates();
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&i| x[(i, split.variable)] <= split.threshold);
    let left = grow_censoring_node(data, left_rows, min_node, nodes);
    let right = grow_censoring_node(data, right_rows, min_node, nodes);
    nodes[id] = CensoringNode::Split { variable: split.variable, threshold: split.threshold, left, right };
    id
}

impl CensoringModel {
    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::Parameter("epsilon must lie in (0, 1]".into()));
        }
        self.epsilon = epsilon;
        Ok(self)
    }

    /// The product-limit curve governing covariate vector `w`.
    pub fn curve_for(&self, w: &[f64]) -> &HazardCurve {
        match &self.kind {
            CensoringKind::Marginal { curve } => curve,
            CensoringKind::Tree { nodes } => {
                let mut id = 0;
                loop {
                    match &nodes[id] {
                        CensoringNode::Leaf { curve, .. } => return curve,
                        CensoringNode::Split { variable, threshold, left, right } => {
                            id = if w[*variable] <= *threshold { *left } else { *right };
                        }
                    }
                }
            }
        }
    }

    /// `max(epsilon, P(C >= u | w))`.
    pub fn survivor_at(&self, u: f64, w: &[f64]) -> f64 {
        self.curve_for(w).survivor_before(u).max(self.epsilon)
    }

    /// Censoring-hazard jumps with time `<= horizon` in the curve for `w`,
    /// with unclamped post-jump survivor values.
    pub fn hazard_path(&self, w: &[f64], horizon: f64) -> &[HazardJump] {
        self.curve_for(w).path_upto(horizon)
    }

    pub fn leaf_count(&self) -> usize {
        match &self.kind {
            CensoringKind::Marginal { .. } => 1,
            CensoringKind::Tree { nodes } => nodes.iter().filter(|n| matches!(n, CensoringNode::Leaf { .. })).count(),
        }
    }
}

impl CensoringDistribution for CensoringModel {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn survivor_before(&self, u: f64, w: &[f64]) -> f64 {
        self.curve_for(w).survivor_before(u)
    }

    fn survivor_after(&self, u: f64, w: &[f64]) -> f64 {
        self.curve_for(w).survivor_after(u)
    }

    fn compensator(&self, w: &[f64], upper: f64, include_upper: bool, f: &mut dyn FnMut(f64) -> f64) -> Compensator {
        let curve = self.curve_for(w);
        let path = if include_upper { curve.path_upto(upper) } else { curve.path_before(upper) };
        let mut out = Compensator::default();
        for jump in path {
            let (g, clamped) = self.clamp(jump.survivor);
            out.clamped |= clamped;
            out.value += f(jump.time) * jump.hazard / g;
        }
        out
    }
}

/// The degenerate model `G = 1`: no censoring hazard anywhere. Imputation
/// under it gives the Buckley-James transform.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCensoring;

impl CensoringDistribution for NoCensoring {
    fn epsilon(&self) -> f64 {
        DEFAULT_EPSILON
    }

    fn survivor_before(&self, _: f64, _: &[f64]) -> f64 {
        1.0
    }

    fn survivor_after(&self, _: f64, _: &[f64]) -> f64 {
        1.0
    }

    fn compensator(&self, _: &[f64], _: f64, _: bool, _: &mut dyn FnMut(f64) -> f64) -> Compensator {
        Compensator::default()
    }
}
