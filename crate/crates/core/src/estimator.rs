//! Maximum-likelihood estimation from a sequence of dependent Bernoulli
//! signatures.
//!
//! At step `k` the signature is Bernoulli with parameter
//! `(p - l_k) / (u_k - l_k)` given the pre-step bounds `(l_k, u_k)`. The
//! log-likelihood is strictly concave, so its score has a single root,
//! located here by bisection and polished by safeguarded Newton steps.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::normal_quantile;
use crate::engine::{DominatedSpace, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::problems::LimitState;
use crate::rng::stream;
use crate::volume::{BoundsPair, VolumePolicy};

/// Pre-step bounds and signature of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRecord {
    pub pre_lower: f64,
    pub pre_upper: f64,
    pub signature: bool,
}

impl LikelihoodRecord {
    pub fn new(pre_lower: f64, pre_upper: f64, signature: bool) -> Self {
        LikelihoodRecord { pre_lower, pre_upper, signature }
    }

    /// The conditionally unbiased local estimate `p_k`.
    pub fn local_estimate(&self) -> f64 {
        if self.signature {
            self.pre_upper
        } else {
            self.pre_lower
        }
    }

    #[inline]
    fn weight(&self, p: f64) -> f64 {
        1.0 / ((p - self.pre_lower) * (self.pre_upper - p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodData {
    records: Vec<LikelihoodRecord>,
    /// Interval known to contain `p` with certainty; the estimate and the
    /// confidence interval are confined to it.
    certain: BoundsPair,
}

impl LikelihoodData {
    /// Data whose certainty interval is the last pre-step bracket.
    pub fn new(records: Vec<LikelihoodRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidArgument("likelihood needs at least one record".into()));
        }
        for r in &records {
            if !(r.pre_lower < r.pre_upper) {
                return Err(Error::DegenerateBracket(r.pre_lower));
            }
        }
        let certain = bracket_of(&records);
        Ok(LikelihoodData { records, certain })
    }

    /// Data from the stochastic steps, with the run's final bounds as certainty interval.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let records = traj
            .records
            .iter()
            .map(|r| LikelihoodRecord::new(r.pre_lower, r.pre_upper, r.signature))
            .collect();
        let mut data = LikelihoodData::new(records)?;
        data.certain = traj.final_bounds();
        Ok(data)
    }

    pub fn records(&self) -> &[LikelihoodRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn certain(&self) -> BoundsPair {
        self.certain
    }

    /// `(max_k l_k, min_k u_k)`.
    pub fn bracket(&self) -> (f64, f64) {
        let b = bracket_of(&self.records);
        (b.lower, b.upper)
    }

    /// Records `start_k..=n` (1-based), keeping the certainty interval.
    pub fn window(&self, start_k: usize) -> Result<Self> {
        if start_k < 1 || start_k > self.records.len() {
            return Err(Error::InvalidArgument(format!(
                "window start {start_k} outside 1..={}",
                self.records.len()
            )));
        }
        Ok(LikelihoodData { records: self.records[start_k - 1..].to_vec(), certain: self.certain })
    }

    fn check_open(&self, p: f64) -> Result<()> {
        let (lower, upper) = self.bracket();
        if p > lower && p < upper {
            Ok(())
        } else {
            Err(Error::OutsideBracket { p, lower, upper })
        }
    }
}

fn bracket_of(records: &[LikelihoodRecord]) -> BoundsPair {
    let lower = records.iter().map(|r| r.pre_lower).fold(f64::NEG_INFINITY, f64::max);
    let upper = records.iter().map(|r| r.pre_upper).fold(f64::INFINITY, f64::min);
    BoundsPair { lower, upper }
}

/// Probability of a failure signature at a step with pre-step bounds `(lower, upper)`.
pub fn conditional_prob(p: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(lower < upper) {
        return Err(Error::DegenerateBracket(lower));
    }
    if !(lower <= p && p <= upper) {
        return Err(Error::OutsideBracket { p, lower, upper });
    }
    Ok((p - lower) / (upper - lower))
}

fn score_unchecked(p: f64, records: &[LikelihoodRecord]) -> f64 {
    records
        .iter()
        .map(|r| if r.signature { 1.0 / (p - r.pre_lower) } else { -1.0 / (r.pre_upper - p) })
        .sum()
}

fn score_slope_unchecked(p: f64, records: &[LikelihoodRecord]) -> f64 {
    records
        .iter()
        .map(|r| {
            let gap = if r.signature { p - r.pre_lower } else { r.pre_upper - p };
            -1.0 / (gap * gap)
        })
        .sum()
}

fn fisher_unchecked(p: f64, records: &[LikelihoodRecord]) -> f64 {
    records.iter().map(|r| r.weight(p)).sum()
}

/// Derivative of the log-likelihood, `Σ_k w_k(p) (p_k - p)`.
pub fn score(p: f64, data: &LikelihoodData) -> Result<f64> {
    data.check_open(p)?;
    Ok(score_unchecked(p, &data.records))
}

/// Empirical Fisher information `Σ_k 1 / ((p - l_k)(u_k - p))`.
pub fn fisher_hat(p: f64, data: &LikelihoodData) -> Result<f64> {
    data.check_open(p)?;
    Ok(fisher_unchecked(p, &data.records))
}

/// `|p - Σ w_k(p) p_k / Σ w_k(p)|`, zero at the likelihood root.
pub fn fixed_point_residual(p: f64, data: &LikelihoodData) -> f64 {
    let (num, den) = data
        .records
        .iter()
        .fold((0.0, 0.0), |(n, d), r| (n + r.weight(p) * r.local_estimate(), d + r.weight(p)));
    (p - num / den).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MleStatus {
    /// Interior root of the score.
    Interior,
    /// The root fell outside the certainty interval and was clipped to it.
    Clipped,
    /// All signatures equal: the likelihood is monotone and the estimate is a bound.
    DegenerateSignatures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub p_hat: f64,
    pub status: MleStatus,
}

impl MleFit {
    pub fn is_boundary(&self) -> bool {
        self.status != MleStatus::Interior
    }

    /// The estimate, or an error when it is not an interior root.
    pub fn interior(&self) -> Result<f64> {
        match self.status {
            MleStatus::Interior => Ok(self.p_hat),
            MleStatus::DegenerateSignatures => Err(Error::DegenerateSignatures),
            MleStatus::Clipped => Err(Error::OutsideBracket {
                p: self.p_hat,
                lower: f64::NAN,
                upper: f64::NAN,
            }),
        }
    }
}

/// Maximum-likelihood estimate; `tol` bounds the final bisection bracket.
pub fn mle(data: &LikelihoodData, tol: f64) -> Result<MleFit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let records = &data.records;
    let failures = records.iter().filter(|r| r.signature).count();
    let certain = data.certain;
    if failures == records.len() {
        let (_, upper) = data.bracket();
        return Ok(MleFit { p_hat: upper.min(certain.upper), status: MleStatus::DegenerateSignatures });
    }
    if failures == 0 {
        let (lower, _) = data.bracket();
        return Ok(MleFit { p_hat: lower.max(certain.lower), status: MleStatus::DegenerateSignatures });
    }

    // The log-likelihood is finite on (max over failures of l_k, min over safes of u_k)
    // and the score runs from +inf to -inf across it.
    let mut lo = records.iter().filter(|r| r.signature).map(|r| r.pre_lower).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = records.iter().filter(|r| !r.signature).map(|r| r.pre_upper).fold(f64::INFINITY, f64::min);
    if !(lo < hi) {
        return Err(Error::DegenerateBracket(lo));
    }
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > tol {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if score_unchecked(mid, records) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Newton polish inside the final bracket.
    let mut p = 0.5 * (lo + hi);
    for _ in 0..4 {
        let s = score_unchecked(p, records);
        let slope = score_slope_unchecked(p, records);
        let next = p - s / slope;
        if !(next > lo && next < hi) || next == p {
            break;
        }
        p = next;
    }
    let _ = mid;

    if p <= certain.lower || p >= certain.upper {
        return Ok(MleFit { p_hat: certain.clamp(p), status: MleStatus::Clipped });
    }
    Ok(MleFit { p_hat: p, status: MleStatus::Interior })
}

/// MLE on records `start_k..=n`.
pub fn windowed_mle(data: &LikelihoodData, start_k: usize, tol: f64) -> Result<MleFit> {
    mle(&data.window(start_k)?, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// True when the interval fell back to the deterministic bounds.
    pub degenerate: bool,
}

/// Wald interval `p̂ ± z / sqrt(Ĵ(p̂))` intersected with the certainty interval.
pub fn confidence_interval(fit: &MleFit, data: &LikelihoodData, level: f64) -> Result<Interval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0, 1)")));
    }
    let certain = data.certain;
    if fit.is_boundary() {
        return Ok(Interval { lower: certain.lower, upper: certain.upper, degenerate: true });
    }
    let info = fisher_hat(fit.p_hat, data)?;
    let half = normal_quantile(0.5 * (1.0 + level)) / info.sqrt();
    Ok(Interval {
        lower: (fit.p_hat - half).max(certain.lower),
        upper: (fit.p_hat + half).min(certain.upper),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub tol: f64,
    pub level: f64,
    /// First record used by the likelihood (1 = full window).
    pub window_start: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { tol: 1e-12, level: 0.95, window_start: 1 }
    }
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    /// Absent when the estimate sits on a pole of the information.
    pub fisher_hat: Option<f64>,
    pub variance: Option<f64>,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub bound_lower: f64,
    pub bound_upper: f64,
    pub gamma0: f64,
    pub degenerate: bool,
    pub status: MleStatus,
    pub n: usize,
    pub calls_total: usize,
}

impl Estimate {
    pub fn final_bounds(&self) -> BoundsPair {
        BoundsPair { lower: self.bound_lower, upper: self.bound_upper }
    }
}

/// `((p0+ - p0-) / p0-)^2` from the post-initialization bounds.
pub fn gamma0(initial: BoundsPair) -> f64 {
    ((initial.upper - initial.lower) / initial.lower).powi(2)
}

/// Applies the estimator to a trajectory.
pub fn estimate(traj: &Trajectory, config: &EstimatorConfig) -> Result<Estimate> {
    let full = LikelihoodData::from_trajectory(traj)?;
    let data = if config.window_start > 1 { full.window(config.window_start)? } else { full };
    let fit = mle(&data, config.tol)?;
    let ci = confidence_interval(&fit, &data, config.level)?;
    let info = {
        let (lo, hi) = data.bracket();
        (fit.p_hat > lo && fit.p_hat < hi).then(|| fisher_unchecked(fit.p_hat, data.records()))
    };
    let bounds = traj.final_bounds();
    Ok(Estimate {
        p_hat: fit.p_hat,
        fisher_hat: info,
        variance: info.map(|j| 1.0 / j),
        ci_lower: ci.lower,
        ci_upper: ci.upper,
        level: config.level,
        bound_lower: bounds.lower,
        bound_upper: bounds.upper,
        gamma0: gamma0(traj.initial_bounds()),
        degenerate: fit.is_boundary() || ci.degenerate,
        status: fit.status,
        n: traj.n(),
        calls_total: traj.calls_total(),
    })
}

/// Plain Monte Carlo on the cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub p_hat: f64,
    pub variance: f64,
    pub n: usize,
    pub failures: usize,
    /// Signature of each sample, in order.
    pub signatures: Vec<bool>,
    /// Bounds implied by monotonicity after each sample (empty unless requested).
    pub bounds: Vec<BoundsPair>,
}

impl McRun {
    /// Estimate from the first `n` samples.
    pub fn prefix_estimate(&self, n: usize) -> f64 {
        let n = n.min(self.signatures.len());
        self.signatures[..n].iter().filter(|s| **s).count() as f64 / n as f64
    }
}

/// `p̂ = failures / n` with plug-in variance `p̂(1 - p̂)/n`.
pub fn mc_baseline(g: &dyn LimitState, n: usize, seed: u64) -> Result<(f64, f64)> {
    let run = mc_run(g, n, seed, false)?;
    Ok((run.p_hat, run.variance))
}

/// Monte Carlo run; with `track_bounds` the monotone bounds of the design are recorded.
pub fn mc_run(g: &dyn LimitState, n: usize, seed: u64, track_bounds: bool) -> Result<McRun> {
    if n < 1 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one sample".into()));
    }
    let d = g.dim();
    let mut rng = stream(seed, 0);
    let mut space = track_bounds.then(|| DominatedSpace::new(d, VolumePolicy { seed, ..VolumePolicy::default() }));
    let mut bounds = Vec::new();
    let mut failures = 0usize;
    let mut signatures = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for _ in 0..n {
        x.iter_mut().for_each(|c| *c = rng.sample(Open01));
        let value = g.evaluate(&x)?;
        let failed = value <= 0.0;
        failures += usize::from(failed);
        signatures.push(failed);
        if let Some(space) = space.as_mut() {
            if space.frontiers().classify(&x)? == Region::NonDominated {
                space.insert(&x, failed)?;
            }
            bounds.push(space.bounds());
        }
    }
    let p_hat = failures as f64 / n as f64;
    Ok(McRun { p_hat, variance: p_hat * (1.0 - p_hat) / n as f64, n, failures, signatures, bounds })
}
