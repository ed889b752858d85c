//! Monotone test problems behind a black-box evaluation interface.
//!
//! Every problem is expressed on the unit cube: a point `x` is mapped to
//! physical inputs by optional coordinate flips followed by the marginal
//! quantiles, and the physical map minus a threshold gives `g(x)`. Failure
//! is `g(x) <= 0`.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::distributions::{beta_quantile_int, Marginal};
use crate::error::{Error, Result};

/// A deterministic function of the unit cube, increasing in every coordinate.
pub trait LimitState: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

/// Direction of monotone dependence per physical input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|s| *s != 1 && *s != -1) {
            return Err(Error::InvalidArgument(format!("signs must be +1 or -1, got {signs:?}")));
        }
        Ok(SignVector(signs))
    }

    pub fn increasing(dim: usize) -> Self {
        SignVector(vec![1; dim])
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Maps a cube coordinate to the marginal's probability level.
    #[inline]
    pub fn level(&self, i: usize, x: f64) -> f64 {
        if self.0[i] < 0 {
            1.0 - x
        } else {
            x
        }
    }
}

/// Built-in physical response functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhysicalMap {
    /// `y_1 / (y_1 + ... + y_d)`.
    ToyRatio,
    /// Dike margin `h_0 - Z_v - H(Q, K_s, Z_m, Z_v)`; with two inputs the
    /// river-bed altitudes are held at their modes.
    Hydraulic,
    /// `y_1 + ... + y_d`.
    Sum,
}

pub const RIVER_WIDTH: f64 = 300.0;
pub const RIVER_LENGTH: f64 = 5000.0;
pub const DIKE_LEVEL: f64 = 55.5;
pub const UPSTREAM_ALTITUDE: f64 = 55.0;
pub const DOWNSTREAM_ALTITUDE: f64 = 50.0;

/// Downstream water level for discharge `q`, friction `ks` and river-bed altitudes.
pub fn water_level(q: f64, ks: f64, zm: f64, zv: f64) -> f64 {
    (q / (RIVER_WIDTH * ks * ((zm - zv) / RIVER_LENGTH).sqrt())).powf(0.6)
}

impl PhysicalMap {
    pub fn apply(&self, y: &[f64]) -> Result<f64> {
        match self {
            PhysicalMap::ToyRatio => {
                let total: f64 = y.iter().sum();
                Ok(y[0] / total)
            }
            PhysicalMap::Hydraulic => {
                let (q, ks, zm, zv) = match *y {
                    [q, ks] => (q, ks, UPSTREAM_ALTITUDE, DOWNSTREAM_ALTITUDE),
                    [q, ks, zm, zv] => (q, ks, zm, zv),
                    _ => {
                        return Err(Error::Evaluation(format!(
                            "hydraulic map takes 2 or 4 inputs, got {}",
                            y.len()
                        )))
                    }
                };
                Ok(DIKE_LEVEL - zv - water_level(q, ks, zm, zv))
            }
            PhysicalMap::Sum => Ok(y.iter().sum()),
        }
    }
}

/// A monotone black box `g(x) = map(T^{-1}(flip(x))) - threshold` with a call counter.
#[derive(Debug)]
pub struct MonotoneProblem {
    pub name: String,
    pub marginals: Vec<Marginal>,
    pub signs: SignVector,
    pub map: PhysicalMap,
    pub threshold: f64,
    /// Exact failure probability, when known analytically.
    pub known_p: Option<f64>,
    /// Reference value for precision indicators when `known_p` is absent.
    pub reference_p: Option<f64>,
    calls: AtomicU64,
}

impl Clone for MonotoneProblem {
    /// Clones the definition with a fresh call counter.
    fn clone(&self) -> Self {
        MonotoneProblem {
            name: self.name.clone(),
            marginals: self.marginals.clone(),
            signs: self.signs.clone(),
            map: self.map,
            threshold: self.threshold,
            known_p: self.known_p,
            reference_p: self.reference_p,
            calls: AtomicU64::new(0),
        }
    }
}

impl MonotoneProblem {
    pub fn new(
        name: impl Into<String>,
        marginals: Vec<Marginal>,
        signs: SignVector,
        map: PhysicalMap,
        threshold: f64,
    ) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidArgument("a problem needs at least one input".into()));
        }
        if signs.as_slice().len() != marginals.len() {
            return Err(Error::DimensionMismatch { expected: marginals.len(), got: signs.as_slice().len() });
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(MonotoneProblem {
            name: name.into(),
            marginals,
            signs,
            map,
            threshold,
            known_p: None,
            reference_p: None,
            calls: AtomicU64::new(0),
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    /// Physical inputs for a cube point.
    pub fn physical(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.marginals.len() {
            return Err(Error::DimensionMismatch { expected: self.marginals.len(), got: x.len() });
        }
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                if !(0.0..=1.0).contains(&xi) {
                    return Err(Error::OutOfUnitCube { index: i, value: xi });
                }
                self.marginals[i].quantile_closed(self.signs.level(i, xi)).map_err(|_| {
                    Error::Evaluation(format!("coordinate {i} = {xi} sits on an open support endpoint"))
                })
            })
            .collect()
    }

    /// Probability used for relative precision indicators.
    pub fn reference(&self) -> Option<f64> {
        self.known_p.or(self.reference_p)
    }
}

impl LimitState for MonotoneProblem {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let y = self.physical(x)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self.map.apply(&y)? - self.threshold)
    }
}

/// Second shape parameter of the beta law followed by the toy ratio in dimension `d`.
pub fn toy_beta_shape(d: usize) -> u32 {
    ((d + 1) * (d + 2) / 2 - 3) as u32
}

/// Toy family with analytically known failure probability `p`.
///
/// Inputs are `Y_i ~ Gamma(i + 1, 1)`; the ratio `Y_1 / ΣY` increases in `Y_1`
/// and decreases in the others, so coordinates `2..d` are flipped.
pub fn toy_problem(d: usize, p: f64) -> Result<MonotoneProblem> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("toy problem needs d >= 2, got {d}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("toy probability {p} outside (0, 1)")));
    }
    let marginals = (1..=d).map(|i| Marginal::Gamma { shape: i as u32 + 1, scale: 1.0 }).collect();
    let mut signs = vec![-1i8; d];
    signs[0] = 1;
    let threshold = beta_quantile_int(2, toy_beta_shape(d), p)?;
    let mut problem = MonotoneProblem::new(
        format!("toy-d{d}-p{p}"),
        marginals,
        SignVector::new(signs)?,
        PhysicalMap::ToyRatio,
        threshold,
    )?;
    problem.known_p = Some(p);
    Ok(problem)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HydraulicVersion {
    Dim2,
    Dim4,
}

/// Reference flood probabilities from 40,000-sample Monte Carlo runs.
pub const HYDRAULIC_REFERENCE_DIM2: f64 = 0.002775;
pub const HYDRAULIC_REFERENCE_DIM4: f64 = 0.010075;

/// Flood model: failure when the water level overtops the dike.
pub fn hydraulic_problem(version: HydraulicVersion) -> MonotoneProblem {
    let discharge = Marginal::GumbelTruncated { location: 1013.0, scale: 558.0, lower: 10.0, upper: 1e4 };
    let friction = Marginal::NormalTruncated { mean: 27.8, sd: 3.0, lower: 0.0, upper: f64::INFINITY };
    let (marginals, signs, reference, name) = match version {
        HydraulicVersion::Dim2 => (vec![discharge, friction], vec![-1, 1], HYDRAULIC_REFERENCE_DIM2, "hydraulic2"),
        HydraulicVersion::Dim4 => (
            vec![
                discharge,
                friction,
                Marginal::Triangular { min: 53.5, mode: 55.0, max: 56.5 },
                Marginal::Triangular { min: 48.5, mode: 50.0, max: 51.5 },
            ],
            vec![-1, 1, 1, -1],
            HYDRAULIC_REFERENCE_DIM4,
            "hydraulic4",
        ),
    };
    let mut problem = MonotoneProblem::new(name, marginals, SignVector(signs), PhysicalMap::Hydraulic, 0.0)
        .expect("hydraulic definition is valid");
    problem.reference_p = Some(reference);
    problem
}
