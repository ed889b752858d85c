//! Bootstrap estimate of the non-asymptotic bias of the MLE.
//!
//! A monotone classifier fitted on points drawn from the two dominated
//! regions stands in for the limit state. The full engine and estimator are
//! rerun on it `S` times; the mean replicate estimate minus the surrogate's
//! own failure probability estimates the bias, which is then subtracted from
//! the original estimate.

use serde::{Deserialize, Serialize};

use crate::engine::{run, EngineConfig, Trajectory};
use crate::error::{Error, Result};
use crate::estimator::{estimate, Estimate, EstimatorConfig, MleStatus};
use crate::geometry::Side;
use crate::problems::LimitState;
use crate::rng::{derive_seed, stream};
use crate::surrogate::{sample_dominated, surrogate_volume, train, MinMaxNetwork, TrainConfig};
use crate::volume::BoundsPair;

const TAG_REPLICATE: u64 = 0x6272_6570;
const TAG_TRAIN: u64 = 0x6274_726e;
const TAG_VOLUME: u64 = 0x6276_6f6c;
const TAG_SAMPLE: u64 = 0x6273_6d70;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    /// Training points drawn from each dominated region.
    pub m: usize,
    /// Uniform points for the surrogate volume.
    pub q: usize,
    /// Number of replicates.
    pub s: usize,
    /// Reruns allowed per replicate whose signatures are all equal.
    pub max_reruns: usize,
    pub max_rejections: u64,
    pub network: TrainConfig,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            m: 100_000,
            q: 1_000_000,
            s: 1000,
            max_reruns: 10,
            max_rejections: 10_000_000,
            network: TrainConfig::default(),
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::InvalidArgument("bootstrap needs s >= 1".into()));
        }
        if self.m == 0 || self.q == 0 {
            return Err(Error::InvalidArgument("bootstrap needs m >= 1 and q >= 1".into()));
        }
        self.network.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub replicate_estimates: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub reruns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub p_hat: f64,
    pub surrogate_p: f64,
    pub bias_hat: f64,
    pub bias_std_error: f64,
    pub corrected_p: f64,
    pub bound_lower: f64,
    pub bound_upper: f64,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub train_error: f64,
    pub reruns: usize,
    pub replicate_estimates: Vec<f64>,
}

fn replicate(
    surrogate: &dyn LimitState,
    engine: &EngineConfig,
    estimator: &EstimatorConfig,
    master_seed: u64,
    index: usize,
    max_reruns: usize,
) -> Result<(f64, usize)> {
    for attempt in 0..=max_reruns {
        let seed = derive_seed(master_seed, TAG_REPLICATE + attempt as u64, index as u64);
        let traj = run(surrogate, engine, seed)?;
        let est = estimate(&traj, estimator)?;
        if est.status != MleStatus::DegenerateSignatures {
            return Ok((est.p_hat, attempt));
        }
    }
    Err(Error::DegenerateSignatures)
}

/// Runs `s` engine and estimator pipelines on `surrogate`.
///
/// Replicate `i` uses a seed derived from `(master_seed, i)`, so the result
/// does not depend on scheduling; with the `parallel` feature replicates run
/// on the rayon pool and are reduced in index order.
pub fn replicate_estimates(
    surrogate: &dyn LimitState,
    engine: &EngineConfig,
    estimator: &EstimatorConfig,
    s: usize,
    master_seed: u64,
    max_reruns: usize,
) -> Result<BiasSummary> {
    if s == 0 {
        return Err(Error::InvalidArgument("bootstrap needs s >= 1".into()));
    }
    engine.validate()?;
    let one = |i: usize| replicate(surrogate, engine, estimator, master_seed, i, max_reruns);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(f64, usize)>> = {
        use rayon::prelude::*;
        (0..s).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(f64, usize)>> = (0..s).map(one).collect();

    let mut estimates = Vec::with_capacity(s);
    let mut reruns = 0;
    for r in results {
        let (p, extra) = r?;
        estimates.push(p);
        reruns += extra;
    }
    let mean = estimates.iter().sum::<f64>() / s as f64;
    let std_error = if s > 1 {
        let var = estimates.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (s - 1) as f64;
        (var / s as f64).sqrt()
    } else {
        0.0
    };
    Ok(BiasSummary { replicate_estimates: estimates, mean, std_error, reruns })
}

/// Bias estimate `mean(replicates) - surrogate_p`.
pub fn bootstrap_bias(
    surrogate: &dyn LimitState,
    surrogate_p: f64,
    engine: &EngineConfig,
    estimator: &EstimatorConfig,
    s: usize,
    master_seed: u64,
    max_reruns: usize,
) -> Result<(f64, BiasSummary)> {
    let summary = replicate_estimates(surrogate, engine, estimator, s, master_seed, max_reruns)?;
    Ok((summary.mean - surrogate_p, summary))
}

/// `p_hat - bias_hat`, clipped to the deterministic bounds.
pub fn corrected_estimate(p_hat: f64, bias_hat: f64, bounds: BoundsPair) -> f64 {
    bounds.clamp(p_hat - bias_hat)
}

/// Fits the surrogate on the dominated regions of a finished run.
pub fn fit_surrogate(traj: &Trajectory, config: &BootstrapConfig, master_seed: u64) -> Result<(MinMaxNetwork, f64)> {
    config.validate()?;
    let frontiers = traj.frontiers()?;
    let mut rng = stream(derive_seed(master_seed, TAG_SAMPLE, 0), 0);
    let failure = sample_dominated(&frontiers, Side::Lower, config.m, &mut rng, config.max_rejections)?;
    let safe = sample_dominated(&frontiers, Side::Upper, config.m, &mut rng, config.max_rejections)?;
    let train_cfg = TrainConfig { seed: derive_seed(master_seed, TAG_TRAIN, 0), ..config.network };
    let fit = train(&failure, &safe, &train_cfg)?;
    Ok((fit.network, fit.train_error))
}

/// The whole correction for one run: fit, surrogate volume, replicates, correction.
pub fn bootstrap_run(
    traj: &Trajectory,
    original: &Estimate,
    engine: &EngineConfig,
    estimator: &EstimatorConfig,
    config: &BootstrapConfig,
    master_seed: u64,
) -> Result<(MinMaxNetwork, BootstrapReport)> {
    let (net, train_error) = fit_surrogate(traj, config, master_seed)?;
    let surrogate_p = surrogate_volume(&net, config.q, derive_seed(master_seed, TAG_VOLUME, 0))?;
    let (bias_hat, summary) =
        bootstrap_bias(&net, surrogate_p, engine, estimator, config.s, master_seed, config.max_reruns)?;
    let bounds = traj.final_bounds();
    let report = BootstrapReport {
        p_hat: original.p_hat,
        surrogate_p,
        bias_hat,
        bias_std_error: summary.std_error,
        corrected_p: corrected_estimate(original.p_hat, bias_hat, bounds),
        bound_lower: bounds.lower,
        bound_upper: bounds.upper,
        m: config.m,
        q: config.q,
        s: config.s,
        train_error,
        reruns: summary.reruns,
        replicate_estimates: summary.replicate_estimates,
    };
    Ok((net, report))
}
