//! Monotone MIN-MAX classifier used as a cheap replica of the limit state.
//!
//! `ĝ(x) = max_k min_h (w_kh · x + b_kh)` with every `w_kh >= 0`, so `ĝ` is
//! increasing in each coordinate. Failure points are the `ĝ <= 0` side.
//! Weights are trained as `w = v²` under a logistic loss, with the min and
//! max replaced by log-sum-exp softenings whose temperature shrinks over the
//! epochs. Inference always uses the exact min and max.

use rand::distr::{Open01, StandardUniform};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Antichain, FrontierPair, Side};
use crate::problems::LimitState;
use crate::rng::{stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl Unit {
    #[inline]
    fn affine(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.offset
    }
}

/// Trained network; its JSON form is the weight dump (groups, units, weights, offset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxNetwork {
    dim: usize,
    groups: Vec<Vec<Unit>>,
}

impl MinMaxNetwork {
    pub fn new(dim: usize, groups: Vec<Vec<Unit>>) -> Result<Self> {
        if dim == 0 || groups.is_empty() || groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidArgument("network needs at least one group and one unit".into()));
        }
        for unit in groups.iter().flatten() {
            if unit.weights.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: unit.weights.len() });
            }
            if unit.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !unit.offset.is_finite() {
                return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
            }
        }
        Ok(MinMaxNetwork { dim, groups })
    }

    /// Single affine unit `w · x + b`.
    pub fn affine(weights: Vec<f64>, offset: f64) -> Result<Self> {
        let dim = weights.len();
        MinMaxNetwork::new(dim, vec![vec![Unit { weights, offset }]])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MinMaxNetwork =
            serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("network json: {e}")))?;
        MinMaxNetwork::new(raw.dim, raw.groups)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn groups(&self) -> &[Vec<Unit>] {
        &self.groups
    }

    /// Exact `max_k min_h`.
    pub fn output(&self, x: &[f64]) -> f64 {
        self.groups
            .iter()
            .map(|g| g.iter().map(|u| u.affine(x)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl LimitState for MinMaxNetwork {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(self.output(x))
    }
}

/// `-1` when the classifier predicts failure (`ĝ(x) <= 0`), `+1` otherwise.
pub fn surrogate_signature(net: &dyn LimitState, x: &[f64]) -> Result<i8> {
    Ok(if net.evaluate(x)? <= 0.0 { -1 } else { 1 })
}

/// Monte Carlo estimate of `P(ĝ <= 0)` from `q` uniform points.
pub fn surrogate_volume(net: &dyn LimitState, q: usize, seed: u64) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidArgument("surrogate volume needs q >= 1".into()));
    }
    let mut rng = stream(seed, 0);
    let mut x = vec![0.0; net.dim()];
    let mut hits = 0usize;
    for _ in 0..q {
        x.iter_mut().for_each(|c| *c = rng.sample(Open01));
        hits += usize::from(net.evaluate(&x)? <= 0.0);
    }
    Ok(hits as f64 / q as f64)
}

/// `m` uniform points of the region dominated by one frontier.
///
/// Draws are taken in the bounding box of the union and kept when covered,
/// which is uniform on the union and much cheaper than whole-cube rejection.
pub fn sample_dominated(
    frontiers: &FrontierPair,
    side: Side,
    m: usize,
    rng: &mut StreamRng,
    max_rejections: u64,
) -> Result<Vec<Vec<f64>>> {
    let chain: &Antichain = match side {
        Side::Lower => frontiers.failure(),
        Side::Upper => frontiers.safe(),
    };
    if m == 0 {
        return Ok(Vec::new());
    }
    if chain.is_empty() {
        return Err(Error::InvalidArgument("requested dominated region is empty".into()));
    }
    let d = chain.dim();
    let (lo, hi): (Vec<f64>, Vec<f64>) = match side {
        Side::Lower => (vec![0.0; d], (0..d).map(|i| chain.iter().map(|v| v[i]).fold(0.0, f64::max)).collect()),
        Side::Upper => ((0..d).map(|i| chain.iter().map(|v| v[i]).fold(1.0, f64::min)).collect(), vec![1.0; d]),
    };
    let mut out = Vec::with_capacity(m);
    let mut x = vec![0.0; d];
    let mut misses = 0u64;
    while out.len() < m {
        for i in 0..d {
            let u: f64 = rng.sample(Open01);
            x[i] = lo[i] + (hi[i] - lo[i]) * u;
        }
        if chain.covers(&x) {
            out.push(x.clone());
            misses = 0;
        } else {
            misses += 1;
            if misses > max_rejections {
                return Err(Error::RejectionBudgetExceeded(max_rejections as usize));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub groups: usize,
    pub units: usize,
    pub epochs: usize,
    /// Lower bound on optimizer steps; small sets get extra epochs.
    pub min_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Softening temperature of the first epoch, in units of `ĝ`.
    pub temperature_start: f64,
    pub temperature_end: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            groups: 4,
            units: 4,
            epochs: 20,
            min_steps: 10_000,
            batch_size: 128,
            learning_rate: 0.1,
            temperature_start: 0.1,
            temperature_end: 0.002,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("train config: {what}")));
        if self.groups == 0 || self.units == 0 {
            return bad("groups and units must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.temperature_start > 0.0 && self.temperature_end > 0.0) {
            return bad("temperatures must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub network: MinMaxNetwork,
    /// Misclassification rate on the training points with exact min/max.
    pub train_error: f64,
    pub final_loss: f64,
}

// Raw parameters: `v` (squared into weights) then offsets, unit-major.
struct Params {
    dim: usize,
    groups: usize,
    units: usize,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Params {
    fn n_units(&self) -> usize {
        self.groups * self.units
    }

    fn network(&self) -> MinMaxNetwork {
        let groups = (0..self.groups)
            .map(|k| {
                (0..self.units)
                    .map(|h| {
                        let j = k * self.units + h;
                        Unit {
                            weights: self.v[j * self.dim..(j + 1) * self.dim].iter().map(|v| v * v).collect(),
                            offset: self.b[j],
                        }
                    })
                    .collect()
            })
            .collect();
        MinMaxNetwork { dim: self.dim, groups }
    }

    /// Smooth output and `dG/dz` per unit.
    fn forward(&self, x: &[f64], tau: f64, z: &mut [f64], dz: &mut [f64]) -> f64 {
        let d = self.dim;
        for (j, zj) in z.iter_mut().enumerate().take(self.n_units()) {
            let v = &self.v[j * d..(j + 1) * d];
            *zj = v.iter().zip(x).map(|(v, xi)| v * v * xi).sum::<f64>() + self.b[j];
        }
        // Soft min inside each group.
        let mut mins = vec![0.0; self.groups];
        for k in 0..self.groups {
            let zs = &z[k * self.units..(k + 1) * self.units];
            let lo = zs.iter().copied().fold(f64::INFINITY, f64::min);
            let s: f64 = zs.iter().map(|zj| (-(zj - lo) / tau).exp()).sum();
            mins[k] = lo - tau * s.ln();
            for (h, zj) in zs.iter().enumerate() {
                dz[k * self.units + h] = (-(zj - lo) / tau).exp() / s;
            }
        }
        // Soft max across groups.
        let hi = mins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = mins.iter().map(|m| ((m - hi) / tau).exp()).sum();
        for k in 0..self.groups {
            let beta = ((mins[k] - hi) / tau).exp() / s;
            dz[k * self.units..(k + 1) * self.units].iter_mut().for_each(|a| *a *= beta);
        }
        hi + tau * s.ln()
    }
}

fn softplus(t: f64) -> f64 {
    if t > 30.0 {
        t
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Fits a network with failure points as negative targets and safe points as positive ones.
pub fn train(failure: &[Vec<f64>], safe: &[Vec<f64>], config: &TrainConfig) -> Result<TrainedNetwork> {
    config.validate()?;
    if failure.is_empty() || safe.is_empty() {
        return Err(Error::InvalidArgument("training needs failure and safe samples".into()));
    }
    let dim = failure[0].len();
    if let Some(bad) = failure.iter().chain(safe).find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let mut rng = stream(config.seed, 0);

    // Each unit starts as a hyperplane through the midpoint of a random
    // failure/safe pair.
    let n_units = config.groups * config.units;
    let mut params = Params { dim, groups: config.groups, units: config.units, v: vec![0.0; n_units * dim], b: vec![0.0; n_units] };
    for j in 0..n_units {
        let a = &failure[rng.random_range(0..failure.len())];
        let c = &safe[rng.random_range(0..safe.len())];
        let mut offset = 0.0;
        for i in 0..dim {
            let u: f64 = rng.sample(StandardUniform);
            let w = 4.0 * (0.5 + u);
            params.v[j * dim + i] = w.sqrt();
            offset -= w * 0.5 * (a[i] + c[i]);
        }
        params.b[j] = offset;
    }

    let data: Vec<(&[f64], f64)> =
        failure.iter().map(|x| (x.as_slice(), -1.0)).chain(safe.iter().map(|x| (x.as_slice(), 1.0))).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut z = vec![0.0; n_units];
    let mut dz = vec![0.0; n_units];
    let loss_at = |params: &Params, tau: f64, z: &mut [f64], dz: &mut [f64]| -> f64 {
        data.iter().map(|(x, t)| softplus(-t * params.forward(x, tau, z, dz))).sum::<f64>() / data.len() as f64
    };
    let initial_loss = loss_at(&params, config.temperature_end, &mut z, &mut dz);

    // Adam state.
    let n_params = params.v.len() + params.b.len();
    let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut grad = vec![0.0; n_params];
    let mut t = 0i32;
    let ratio = config.temperature_end / config.temperature_start;
    let batches = data.len().div_ceil(config.batch_size);
    let epochs = config.epochs.max(config.min_steps.div_ceil(batches));
    for epoch in 0..epochs {
        let frac = if epochs > 1 { epoch as f64 / (epochs - 1) as f64 } else { 1.0 };
        let tau = config.temperature_start * ratio.powf(frac);
        // Step size decays twentyfold so the last epochs settle the boundary.
        let lr = config.learning_rate * 0.05f64.powf(frac);
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &idx in batch {
                let (x, target) = data[idx];
                let out = params.forward(x, tau, &mut z, &mut dz);
                let dl = -target * sigmoid(-target * out);
                for j in 0..n_units {
                    let gz = dl * dz[j];
                    if gz == 0.0 {
                        continue;
                    }
                    for i in 0..dim {
                        grad[j * dim + i] += gz * 2.0 * params.v[j * dim + i] * x[i];
                    }
                    grad[n_units * dim + j] += gz;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            t += 1;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for p in 0..n_params {
                let g = grad[p] * scale;
                m1[p] = beta1 * m1[p] + (1.0 - beta1) * g;
                m2[p] = beta2 * m2[p] + (1.0 - beta2) * g * g;
                let step = lr * (m1[p] / c1) / ((m2[p] / c2).sqrt() + eps);
                if p < params.v.len() {
                    params.v[p] -= step;
                } else {
                    params.b[p - params.v.len()] -= step;
                }
            }
        }
    }

    let final_loss = loss_at(&params, config.temperature_end, &mut z, &mut dz);
    if !final_loss.is_finite() || final_loss >= initial_loss {
        return Err(Error::TrainingDiverged(format!("loss went from {initial_loss} to {final_loss}")));
    }
    let network = params.network();
    let wrong = failure.iter().filter(|x| network.output(x) > 0.0).count()
        + safe.iter().filter(|x| network.output(x) <= 0.0).count();
    Ok(TrainedNetwork { network, train_error: wrong as f64 / data.len() as f64, final_loss })
}

/// Counts pairs `x ⪰ y` with `ĝ(x) < ĝ(y)` among `pairs` random comparable pairs.
pub fn monotonicity_violations(net: &dyn LimitState, pairs: usize, seed: u64) -> Result<usize> {
    let d = net.dim();
    let mut rng = stream(seed, 0);
    let mut violations = 0;
    let mut y = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..pairs {
        for i in 0..d {
            y[i] = rng.sample(Open01);
            let u: f64 = rng.sample(StandardUniform);
            x[i] = y[i] + (1.0 - y[i]) * u;
        }
        if net.evaluate(&x)? < net.evaluate(&y)? {
            violations += 1;
        }
    }
    Ok(violations)
}
