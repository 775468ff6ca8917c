//! Synthetic two-cause data with known cumulative incidence.
//!
//! Subject `i` draws its covariates, cause, event time and censoring time, in
//! that order, from its own stream `derive(seed, SUBJECT, i)`. Test points
//! use the `TEST` stream so they never coincide with training rows.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Open01, StandardNormal};

use crate::censoring::{CensoringDistribution, Compensator, DEFAULT_EPSILON};
use crate::data::{lower_quantiles, check_probs, Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nuisance::{ParametricFineGray, Z_DIM};
use crate::num;
use crate::rng::{self, tag, Rng};

pub const BETA1: [f64; Z_DIM] = [0.5, 0.5, 0.5, 0.5, 0.6, -0.3];
pub const BETA2: [f64; Z_DIM] = [0.0, -0.5, -0.5, -0.5, 0.5, 0.1];
pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_DIM: usize = 20;
pub const AR_RHO: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Correlation {
    Independent,
    /// `corr(W_i, W_j) = rho^|i - j|`.
    Ar { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum CensoringScheme {
    /// `C = exp(N(mu(w), 1))` with
    /// `mu(w) = 0.1 + 0.1 |W1 + W3 + W5| + 0.1 |W11 + W13 + W15|`.
    LogNormal,
    Uniform { a: f64, b: f64 },
    None,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimConfig {
    pub n: usize,
    pub p_dim: usize,
    pub correlation: Correlation,
    pub fg: ParametricFineGray,
    pub censoring: CensoringScheme,
    pub seed: u64,
}

impl SimConfig {
    /// Twenty independent covariates, the default Fine-Gray coefficients and
    /// lognormal censoring.
    pub fn standard(n: usize, seed: u64) -> Self {
        SimConfig {
            n,
            p_dim: DEFAULT_DIM,
            correlation: Correlation::Independent,
            fg: ParametricFineGray::new(DEFAULT_P, BETA1, BETA2).expect("default parameters are valid"),
            censoring: CensoringScheme::LogNormal,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Parameter("sample size must be at least 1".into()));
        }
        if self.p_dim < crate::nuisance::MIN_COVARIATES {
            return Err(Error::Parameter(alloc::format!(
                "the generator needs at least {} covariates, got {}",
                crate::nuisance::MIN_COVARIATES,
                self.p_dim
            )));
        }
        if let Correlation::Ar { rho } = self.correlation {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Parameter(alloc::format!("AR coefficient must lie in [0, 1), got {rho}")));
            }
        }
        if let CensoringScheme::Uniform { a, b } = self.censoring {
            if !(a.is_finite() && b.is_finite() && 0.0 <= a && a < b) {
                return Err(Error::Parameter(alloc::format!("uniform censoring needs 0 <= a < b, got [{a}, {b}]")));
            }
        }
        Ok(())
    }
}

fn stream(seed: u64, stream_tag: u64, i: usize) -> Rng {
    rng::from_seed(rng::derive(seed, stream_tag, i as u64))
}

fn draw_covariates(config: &SimConfig, rng: &mut Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..config.p_dim).map(|_| rng.sample(StandardNormal)).collect();
    if let Correlation::Ar { rho } = config.correlation {
        let s = num::sqrt(1.0 - rho * rho);
        for k in 1..w.len() {
            w[k] = rho * w[k - 1] + s * w[k];
        }
    }
    w
}

fn uniform(rng: &mut Rng) -> f64 {
    rng.sample(Open01)
}

/// One covariate row per stream index; `stream_tag` is `SUBJECT` for training
/// rows and `TEST` for evaluation points.
fn rows_from(config: &SimConfig, stream_tag: u64, count: usize) -> Matrix {
    let mut out = Matrix::zeros(count, config.p_dim);
    for i in 0..count {
        let mut rng = stream(config.seed, stream_tag, i);
        out.row_mut(i).copy_from_slice(&draw_covariates(config, &mut rng));
    }
    out
}

/// Covariates of the first `count` training subjects.
pub fn gen_covariates(config: &SimConfig, count: usize) -> Matrix {
    rows_from(config, tag::SUBJECT, count)
}

/// Evaluation points, independent of the training rows.
pub fn gen_test_covariates(config: &SimConfig, count: usize) -> Matrix {
    rows_from(config, tag::TEST, count)
}

/// Draws `(T, M)` given `w`.
pub fn gen_event(fg: &ParametricFineGray, w: &[f64], rng: &mut Rng) -> (f64, u32) {
    let (eta1, eta2) = fg.rates(w);
    let pi1 = fg.cause1_mass(eta1);
    if uniform(rng) < pi1 {
        let u = uniform(rng);
        // (1 - u pi1)^(1/eta1) = 1 - q
        let q = -num::exp_m1(num::ln_1p(-u * pi1) / eta1);
        let base = (1.0 - q / fg.p()).clamp(1e-15, 1.0);
        (-num::ln(base), 1)
    } else {
        (-num::ln(uniform(rng)) / eta2, 2)
    }
}

/// `mu(w)` of the lognormal censoring scheme.
pub fn lognormal_location(w: &[f64]) -> f64 {
    0.1 + 0.1 * (w[0] + w[2] + w[4]).abs() + 0.1 * (w[10] + w[12] + w[14]).abs()
}

pub fn gen_censoring(scheme: CensoringScheme, w: &[f64], rng: &mut Rng) -> f64 {
    match scheme {
        CensoringScheme::LogNormal => {
            let z: f64 = rng.sample(StandardNormal);
            num::exp(lognormal_location(w) + z)
        }
        CensoringScheme::Uniform { a, b } => a + (b - a) * uniform(rng),
        CensoringScheme::None => f64::INFINITY,
    }
}

/// A simulated subject before censoring is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub covariates: Vec<f64>,
    pub event_time: f64,
    pub cause: u32,
    pub censoring_time: f64,
}

impl Subject {
    pub fn observed(&self) -> Result<ObservedRecord> {
        let delta = self.event_time <= self.censoring_time;
        let time = if delta { self.event_time } else { self.censoring_time };
        ObservedRecord::new(time, if delta { self.cause } else { 0 }, self.covariates.clone())
    }

    /// The record as it would be seen without censoring.
    pub fn full(&self) -> Result<ObservedRecord> {
        ObservedRecord::new(self.event_time, self.cause, self.covariates.clone())
    }
}

pub fn gen_subject(config: &SimConfig, i: usize) -> Subject {
    let mut rng = stream(config.seed, tag::SUBJECT, i);
    let covariates = draw_covariates(config, &mut rng);
    let (event_time, cause) = gen_event(&config.fg, &covariates, &mut rng);
    let censoring_time = gen_censoring(config.censoring, &covariates, &mut rng);
    Subject { covariates, event_time, cause, censoring_time }
}

/// Observed data together with the latent event and censoring times.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub observed: Dataset,
    /// The same subjects with `Delta = 1` everywhere.
    pub full: Dataset,
    pub subjects: Vec<Subject>,
    pub oracle: ParametricFineGray,
}

pub fn simulate(config: &SimConfig) -> Result<Simulated> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    let subjects: Vec<Subject> = {
        use rayon::prelude::*;
        (0..config.n).into_par_iter().map(|i| gen_subject(config, i)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let subjects: Vec<Subject> = (0..config.n).map(|i| gen_subject(config, i)).collect();
    let observed = subjects.iter().map(Subject::observed).collect::<Result<Vec<_>>>()?;
    let full = subjects.iter().map(Subject::full).collect::<Result<Vec<_>>>()?;
    Ok(Simulated {
        observed: Dataset::new(observed, 2, None)?,
        full: Dataset::new(full, 2, None)?,
        subjects,
        oracle: config.fg.clone(),
    })
}

/// Observed dataset and the oracle incidence model.
pub fn simulate_dataset(config: &SimConfig) -> Result<(Dataset, ParametricFineGray)> {
    let sim = simulate(config)?;
    Ok((sim.observed, sim.oracle))
}

/// Quantiles of the latent event time `T` (all causes) from `sample_size`
/// draws on a stream reserved for this purpose.
pub fn oracle_time_quantiles(config: &SimConfig, probs: &[f64], sample_size: usize) -> Result<Vec<f64>> {
    check_probs(probs)?;
    if sample_size < 1 {
        return Err(Error::Parameter("oracle sample size must be at least 1".into()));
    }
    let one = |i: usize| {
        let mut rng = stream(config.seed, tag::ORACLE, i);
        let w = draw_covariates(config, &mut rng);
        gen_event(&config.fg, &w, &mut rng).0
    };
    #[cfg(feature = "parallel")]
    let mut times: Vec<f64> = {
        use rayon::prelude::*;
        (0..sample_size).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut times: Vec<f64> = (0..sample_size).map(one).collect();
    times.sort_by(f64::total_cmp);
    Ok(lower_quantiles(&times, probs))
}

// ---------------------------------------------------------------------------
// True lognormal censoring distribution
// ---------------------------------------------------------------------------

const GL_NODES: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_WEIGHTS: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
const Z_LOWER: f64 = -8.5;
const PANEL: f64 = 0.25;

fn upper_normal_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / core::f64::consts::SQRT_2)
}

fn normal_density(z: f64) -> f64 {
    num::exp(-0.5 * z * z) / num::sqrt(2.0 * core::f64::consts::PI)
}

/// The lognormal censoring scheme as a [`CensoringDistribution`].
///
/// `G(u | w) = P(Z > ln u - mu(w))` for standard normal `Z`. The compensator
/// integral is computed in `z = ln u - mu` as
/// `integral f(e^{mu + z}) phi(z) / (G(z) max(G(z), eps)) dz`
/// by composite 8-point Gauss-Legendre on panels of width 0.25, with a panel
/// boundary where `G` reaches the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueLogNormalCensoring {
    epsilon: f64,
    /// `z` at which `G(z) = epsilon`.
    z_floor: f64,
}

impl Default for TrueLogNormalCensoring {
    fn default() -> Self {
        Self::new(DEFAULT_EPSILON).expect("default floor is valid")
    }
}

impl TrueLogNormalCensoring {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Parameter(alloc::format!("epsilon must lie in (0, 1), got {epsilon}")));
        }
        // G is decreasing; bisect for G(z) = epsilon.
        let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if upper_normal_tail(mid) > epsilon {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(TrueLogNormalCensoring { epsilon, z_floor: 0.5 * (lo + hi) })
    }

    fn survivor(&self, u: f64, w: &[f64]) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        upper_normal_tail(num::ln(u) - lognormal_location(w))
    }
}

impl CensoringDistribution for TrueLogNormalCensoring {
    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn survivor_before(&self, u: f64, w: &[f64]) -> f64 {
        self.survivor(u, w)
    }

    fn survivor_after(&self, u: f64, w: &[f64]) -> f64 {
        self.survivor(u, w)
    }

    fn compensator(&self, w: &[f64], upper: f64, _include_upper: bool, f: &mut dyn FnMut(f64) -> f64) -> Compensator {
        let mut out = Compensator::default();
        if upper <= 0.0 {
            return out;
        }
        let mu = lognormal_location(w);
        let z_up = num::ln(upper) - mu;
        if z_up <= Z_LOWER {
            return out;
        }
        out.clamped = z_up > self.z_floor;
        let mut breaks: Vec<f64> = vec![Z_LOWER];
        let mut z = Z_LOWER;
        loop {
            let next = z + PANEL;
            if z < self.z_floor && self.z_floor < next.min(z_up) {
                breaks.push(self.z_floor);
            }
            if next >= z_up {
                break;
            }
            breaks.push(next);
            z = next;
        }
        breaks.push(z_up);
        let eps = self.epsilon;
        let mut integrand = |z: f64| {
            let g = upper_normal_tail(z);
            f(num::exp(mu + z)) * normal_density(z) / (g * g.max(eps))
        };
        for pair in breaks.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let mut s = 0.0;
            for (x, wt) in GL_NODES.iter().zip(&GL_WEIGHTS) {
                s += wt * (integrand(mid - half * x) + integrand(mid + half * x));
            }
            out.value += half * s;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{CifCurve, ParametricFineGray};

    fn config(n: usize) -> SimConfig {
        SimConfig::standard(n, 7)
    }

    fn column_stats(m: &Matrix, j: usize) -> (f64, f64) {
        let c = m.column(j);
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        let var = c.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c.len() as f64;
        (mean, var)
    }

    #[test]
    fn independent_covariate_moments() {
        let m = gen_covariates(&config(100_000), 100_000);
        for j in 0..m.ncols() {
            let (mean, var) = column_stats(&m, j);
            assert!(mean.abs() < 0.02, "column {j} mean {mean}");
            assert!((0.97..1.03).contains(&var), "column {j} variance {var}");
        }
    }

    #[test]
    fn ar_lag_one_correlation() {
        let mut c = config(100_000);
        c.correlation = Correlation::Ar { rho: AR_RHO };
        let m = gen_covariates(&c, 100_000);
        for j in 0..m.ncols() - 1 {
            let (a, b) = (m.column(j), m.column(j + 1));
            let (ma, va) = column_stats(&m, j);
            let (mb, vb) = column_stats(&m, j + 1);
            let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
            let r = cov / num::sqrt(va * vb);
            assert!((0.73..0.77).contains(&r), "lag-1 correlation {r} at column {j}");
        }
    }

    #[test]
    fn single_row() {
        let m = gen_covariates(&config(1), 1);
        assert_eq!((m.nrows(), m.ncols()), (1, DEFAULT_DIM));
        assert!(m.as_slice().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn zero_coefficients_give_even_cause_split() {
        let fg = ParametricFineGray::new(0.5, [0.0; Z_DIM], [0.0; Z_DIM]).unwrap();
        let (eta1, _) = fg.rates(&[0.3; 20]);
        assert!((fg.cause1_mass(eta1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cause_masses_sum_to_one() {
        let c = config(50);
        let w = gen_covariates(&c, 50);
        for row in w.rows_iter() {
            let curve = c.fg.bind(row);
            let total = c.fg.cause1_mass(curve.eta1) + curve.cif(2, f64::INFINITY);
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_matches_closed_form() {
        let c = config(5);
        let points = gen_test_covariates(&c, 5);
        let draws = 1_000_000;
        for (k, w) in points.rows_iter().enumerate() {
            let mut rng = rng::from_seed(rng::derive(99, 0, k as u64));
            let mut counts = [[0usize; 4]; 2];
            let times = [0.25, 0.5, 1.0, 2.0];
            for _ in 0..draws {
                let (t, m) = gen_event(&c.fg, w, &mut rng);
                for (j, &s) in times.iter().enumerate() {
                    if t <= s {
                        counts[m as usize - 1][j] += 1;
                    }
                }
            }
            let curve = c.fg.bind(w);
            for (m, row) in counts.iter().enumerate() {
                for (j, &s) in times.iter().enumerate() {
                    let emp = row[j] as f64 / draws as f64;
                    let truth = curve.cif(m as u32 + 1, s);
                    assert!((emp - truth).abs() < 0.005, "point {k}, cause {}, t {s}: {emp} vs {truth}", m + 1);
                }
            }
        }
    }

    #[test]
    fn smallest_uniform_gives_near_zero_time() {
        let fg = config(1).fg;
        let w = [0.1; 20];
        let (eta1, _) = fg.rates(&w);
        let pi1 = fg.cause1_mass(eta1);
        let u = 1e-12;
        let q = -num::exp_m1(num::ln_1p(-u * pi1) / eta1);
        let t = -num::ln((1.0 - q / fg.p()).clamp(1e-15, 1.0));
        assert!((0.0..1e-9).contains(&t));
    }

    #[test]
    fn no_censoring_means_all_events() {
        let mut c = config(200);
        c.censoring = CensoringScheme::None;
        let (data, _) = simulate_dataset(&c).unwrap();
        assert_eq!(data.censored_count(), 0);
    }

    #[test]
    fn uniform_censoring_partial() {
        let mut c = config(2000);
        c.censoring = CensoringScheme::Uniform { a: 0.0, b: 50.0 };
        let (data, _) = simulate_dataset(&c).unwrap();
        let frac = data.censoring_fraction();
        assert!(frac > 0.0 && frac < 1.0);
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let a = simulate(&config(300)).unwrap();
        let b = simulate(&config(300)).unwrap();
        assert_eq!(a.subjects, b.subjects);
        assert_eq!(a.observed.records(), b.observed.records());
        assert_eq!(a.observed.n(), 300);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = config(10);
        c.p_dim = 10;
        assert!(simulate(&c).is_err());
        let mut c = config(10);
        c.correlation = Correlation::Ar { rho: 1.0 };
        assert!(simulate(&c).is_err());
        let mut c = config(0);
        c.n = 0;
        assert!(simulate(&c).is_err());
    }

    #[test]
    fn censoring_independent_of_event_given_w() {
        let c = config(1);
        let w = gen_test_covariates(&c, 1);
        let w = w.row(0);
        let mut rng = rng::from_seed(3);
        let n = 20_000;
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let (t, _) = gen_event(&c.fg, w, &mut rng);
                (t.min(10.0), gen_censoring(c.censoring, w, &mut rng).min(10.0))
            })
            .collect();
        let mt = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let mc = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (t, cc) in &pairs {
            sxy += (t - mt) * (cc - mc);
            sxx += (t - mt) * (t - mt);
            syy += (cc - mc) * (cc - mc);
        }
        let r = sxy / num::sqrt(sxx * syy);
        assert!(r.abs() < 4.0 / num::sqrt(n as f64), "correlation {r}");
    }

    #[test]
    fn lognormal_survivor_matches_sampler() {
        let w = [0.2; 20];
        let g = TrueLogNormalCensoring::default();
        let mut rng = rng::from_seed(5);
        let n = 200_000;
        let u = 1.3;
        let above = (0..n).filter(|_| gen_censoring(CensoringScheme::LogNormal, &w, &mut rng) > u).count();
        let emp = above as f64 / n as f64;
        assert!((emp - g.survivor_after(u, &w)).abs() < 0.005);
    }

    #[test]
    fn lognormal_compensator_telescopes() {
        let g = TrueLogNormalCensoring::new(1e-12).unwrap();
        let w = [0.4; 20];
        for &upper in &[0.05, 0.5, 1.0, 3.0, 8.0] {
            let comp = g.compensator(&w, upper, true, &mut |_| 1.0);
            let total = 1.0 / g.survivor_after(upper, &w) - comp.value;
            assert!((total - 1.0).abs() < 1e-9, "upper {upper}: {total}");
            assert!(!comp.clamped);
        }
    }

    #[test]
    fn lognormal_floor_flags_clamping() {
        let g = TrueLogNormalCensoring::new(0.05).unwrap();
        let w = [0.0; 20];
        assert!(g.compensator(&w, 50.0, true, &mut |_| 1.0).clamped);
        assert!(!g.compensator(&w, 0.5, true, &mut |_| 1.0).clamped);
    }

    #[test]
    fn oracle_quantiles_are_increasing() {
        let q = oracle_time_quantiles(&config(1), &[0.25, 0.5, 0.75], 20_000).unwrap();
        assert!(q[0] > 0.0 && q[0] < q[1] && q[1] < q[2]);
    }
}
