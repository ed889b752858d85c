//! Volumes of unions of orthants anchored at a cube corner (Klee's measure
//! problem restricted to the unit cube), exact and Monte Carlo.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dominates_unchecked, Antichain, FrontierPair, Side};

/// Deterministic probability bounds `lower <= p <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundsPair {
    pub const TRIVIAL: BoundsPair = BoundsPair { lower: 0.0, upper: 1.0 };

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }

    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// Zero for exact computations.
    pub std_error: f64,
    /// Zero for exact computations.
    pub sample_count: usize,
}

/// Chooses between the exact sweepline and Monte Carlo by dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolumePolicy {
    pub exact_max_dim: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for VolumePolicy {
    fn default() -> Self {
        VolumePolicy { exact_max_dim: 3, mc_samples: 1_000_000, seed: 0 }
    }
}

impl VolumePolicy {
    pub fn is_exact(&self, dim: usize) -> bool {
        dim <= self.exact_max_dim
    }
}

fn validate<P: AsRef<[f64]>>(vertices: &[P], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    for v in vertices {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(Error::OutOfUnitCube { index, value });
        }
    }
    Ok(())
}

/// Exact measure of `∪_j [0, v_j]` by the recursive sweepline.
pub fn klee_volume<P: AsRef<[f64]>>(vertices: &[P], dim: usize) -> Result<f64> {
    validate(vertices, dim)?;
    let rows: Vec<&[f64]> = vertices.iter().map(AsRef::as_ref).collect();
    Ok(sweep(&rows, dim))
}

/// Sweeps the last active coordinate `dim - 1`; only the first `dim`
/// coordinates of each row are read.
fn sweep(rows: &[&[f64]], dim: usize) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    if dim == 1 {
        return rows.iter().map(|r| r[0]).fold(0.0, f64::max);
    }
    let axis = dim - 1;
    let mut sorted: Vec<&[f64]> = rows.to_vec();
    sorted.sort_unstable_by(|a, b| a[axis].total_cmp(&b[axis]));

    if dim == 2 {
        // Each slice's 1-d measure is the maximum first coordinate over the
        // remaining rows, i.e. a suffix maximum.
        let mut total = 0.0;
        let mut suffix_max = 0.0f64;
        let mut upper = sorted[sorted.len() - 1][1];
        for row in sorted.iter().rev() {
            let z = row[1];
            total += (upper - z) * suffix_max;
            upper = z;
            suffix_max = suffix_max.max(row[0]);
        }
        return total + upper * suffix_max;
    }

    let mut total = 0.0;
    let mut previous = 0.0;
    for i in 0..sorted.len() {
        let z = sorted[i][axis];
        let thickness = z - previous;
        previous = z;
        if thickness > 0.0 {
            total += thickness * sweep(&sorted[i..], dim - 1);
        }
    }
    total
}

/// Volume newly covered by adding the orthant of `x` to an antichain's union.
pub(crate) fn orthant_increment(x: &[f64], existing: &Antichain) -> f64 {
    let dim = x.len();
    let reflect = existing.side() == Side::Upper;
    let map = |c: f64| if reflect { 1.0 - c } else { c };
    let anchor: Vec<f64> = x.iter().map(|&c| map(c)).collect();
    let box_volume: f64 = anchor.iter().product();
    if box_volume == 0.0 {
        return 0.0;
    }
    let mut clipped: Vec<Vec<f64>> = existing
        .iter()
        .map(|v| v.iter().zip(&anchor).map(|(&c, &a)| map(c).min(a)).collect::<Vec<f64>>())
        .filter(|v: &Vec<f64>| v.iter().all(|&c| c > 0.0))
        .collect();
    prune_lower(&mut clipped);
    let rows: Vec<&[f64]> = clipped.iter().map(Vec::as_slice).collect();
    (box_volume - sweep(&rows, dim)).max(0.0)
}

/// Monte Carlo counterpart of [`orthant_increment`]: samples inside the new box.
pub(crate) fn orthant_increment_mc(x: &[f64], existing: &Antichain, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let reflect = existing.side() == Side::Upper;
    let box_volume: f64 = x.iter().map(|&c| if reflect { 1.0 - c } else { c }).product();
    if box_volume == 0.0 || samples == 0 {
        return 0.0;
    }
    let mut u = vec![0.0; x.len()];
    let mut fresh = 0usize;
    for _ in 0..samples {
        for (ui, &xi) in u.iter_mut().zip(x) {
            let t: f64 = rng.random();
            *ui = if reflect { xi + (1.0 - xi) * t } else { xi * t };
        }
        if !existing.covers(&u) {
            fresh += 1;
        }
    }
    box_volume * fresh as f64 / samples as f64
}

fn prune_lower(rows: &mut Vec<Vec<f64>>) {
    rows.sort_by(|a, b| {
        let pa: f64 = a.iter().product();
        let pb: f64 = b.iter().product();
        pb.total_cmp(&pa)
    });
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for row in rows.drain(..) {
        if !kept.iter().any(|k| dominates_unchecked(k, &row)) {
            kept.push(row);
        }
    }
    *rows = kept;
}

/// Unbiased Monte Carlo estimate of the orthant-union volume.
///
/// The upper side reflects coordinates `x -> 1 - x` and reuses the lower test.
pub fn volume_mc<P: AsRef<[f64]>>(vertices: &[P], side: Side, samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument("Monte Carlo volume needs at least one sample".into()));
    }
    if vertices.is_empty() {
        return Ok(VolumeEstimate { value: 0.0, std_error: 0.0, sample_count: samples });
    }
    let dim = vertices[0].as_ref().len();
    validate(vertices, dim)?;
    let lowered: Vec<Vec<f64>> = vertices
        .iter()
        .map(|v| match side {
            Side::Lower => v.as_ref().to_vec(),
            Side::Upper => v.as_ref().iter().map(|c| 1.0 - c).collect(),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![0.0; dim];
    let mut hits = 0usize;
    for _ in 0..samples {
        u.iter_mut().for_each(|c| *c = rng.random());
        if lowered.iter().any(|v| dominates_unchecked(v, &u)) {
            hits += 1;
        }
    }
    let value = hits as f64 / samples as f64;
    Ok(VolumeEstimate { value, std_error: (value * (1.0 - value) / samples as f64).sqrt(), sample_count: samples })
}

/// Volume of one frontier's union under the policy.
pub fn frontier_volume(chain: &Antichain, policy: &VolumePolicy) -> Result<VolumeEstimate> {
    let dim = chain.dim();
    if policy.is_exact(dim) {
        let rows: Vec<Vec<f64>> = match chain.side() {
            Side::Lower => chain.iter().map(<[f64]>::to_vec).collect(),
            Side::Upper => chain.iter().map(|v| v.iter().map(|c| 1.0 - c).collect()).collect(),
        };
        let value = klee_volume(&rows, dim)?;
        Ok(VolumeEstimate { value, std_error: 0.0, sample_count: 0 })
    } else {
        let seed = policy.seed ^ if chain.side() == Side::Upper { 0x9e37_79b9_7f4a_7c15 } else { 0 };
        volume_mc(&chain.to_points(), chain.side(), policy.mc_samples, seed)
    }
}

/// `(Vol(U⁻), 1 − Vol(U⁺))` computed from scratch.
pub fn bounds(frontiers: &FrontierPair, policy: &VolumePolicy) -> Result<BoundsPair> {
    let lower = frontier_volume(frontiers.failure(), policy)?.value;
    let upper = 1.0 - frontier_volume(frontiers.safe(), policy)?.value;
    if lower > upper {
        return Err(Error::SeparabilityViolation(format!("bounds crossed: lower {lower} > upper {upper}")));
    }
    Ok(BoundsPair { lower, upper })
}
