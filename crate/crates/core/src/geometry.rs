//! Partial order on the unit cube and the two frontiers of evaluated points.
//!
//! A failure point `f` (signature 1) certifies failure on the lower orthant
//! `[0, f]`; a safe point `s` certifies safety on the upper orthant `[s, 1]`.
//! Each side is stored as its minimal antichain, which generates the same
//! dominated union as the full list of evaluated points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the unit cube `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("a point needs at least one coordinate".into()));
        }
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfUnitCube { index, value });
            }
        }
        Ok(Point(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `x ⪰ y` coordinatewise, with exact comparisons.
pub fn dominates(x: &[f64], y: &[f64]) -> Result<bool> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    Ok(dominates_unchecked(x, y))
}

#[inline]
pub(crate) fn dominates_unchecked(x: &[f64], y: &[f64]) -> bool {
    x.iter().zip(y).all(|(a, b)| a >= b)
}

/// Where a point falls relative to the dominated subspaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    FailureDominated,
    SafeDominated,
    NonDominated,
}

/// Which orthant family a vertex set generates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Orthants `[0, v]` (failure side).
    Lower,
    /// Orthants `[v, 1]` (safe side).
    Upper,
}

/// Minimal antichain stored flat, ordered by decreasing orthant volume so that
/// membership scans hit the largest boxes first.
#[derive(Debug, Clone, PartialEq)]
pub struct Antichain {
    dim: usize,
    side: Side,
    coords: Vec<f64>,
    volumes: Vec<f64>,
}

impl Antichain {
    pub fn new(dim: usize, side: Side) -> Self {
        Antichain { dim, side, coords: Vec::new(), volumes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.iter().map(|c| Point(c.to_vec())).collect()
    }

    /// True when some member's orthant contains `x`.
    #[inline]
    pub fn covers(&self, x: &[f64]) -> bool {
        match self.side {
            Side::Lower => self.iter().any(|v| dominates_unchecked(v, x)),
            Side::Upper => self.iter().any(|v| dominates_unchecked(x, v)),
        }
    }

    fn orthant_volume(&self, x: &[f64]) -> f64 {
        match self.side {
            Side::Lower => x.iter().product(),
            Side::Upper => x.iter().map(|c| 1.0 - c).product(),
        }
    }

    /// Adds `x`, dropping members whose orthant is swallowed by the orthant of `x`.
    fn push(&mut self, x: &[f64]) {
        let dim = self.dim;
        let side = self.side;
        let mut kept_coords = Vec::with_capacity(self.coords.len() + dim);
        let mut kept_volumes = Vec::with_capacity(self.volumes.len() + 1);
        let vol = self.orthant_volume(x);
        let mut placed = false;
        for (i, member) in self.coords.chunks_exact(dim).enumerate() {
            let swallowed = match side {
                Side::Lower => dominates_unchecked(x, member),
                Side::Upper => dominates_unchecked(member, x),
            };
            if swallowed {
                continue;
            }
            if !placed && vol >= self.volumes[i] {
                kept_coords.extend_from_slice(x);
                kept_volumes.push(vol);
                placed = true;
            }
            kept_coords.extend_from_slice(member);
            kept_volumes.push(self.volumes[i]);
        }
        if !placed {
            kept_coords.extend_from_slice(x);
            kept_volumes.push(vol);
        }
        self.coords = kept_coords;
        self.volumes = kept_volumes;
    }
}

/// The failure and safe frontiers of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPair {
    dim: usize,
    failure: Antichain,
    safe: Antichain,
}

impl FrontierPair {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        FrontierPair { dim, failure: Antichain::new(dim, Side::Lower), safe: Antichain::new(dim, Side::Upper) }
    }

    /// Builds a pair by inserting points in order; points that are already
    /// dominated on their own side are skipped.
    pub fn from_points<'a>(dim: usize, points: impl IntoIterator<Item = (&'a [f64], bool)>) -> Result<Self> {
        let mut pair = FrontierPair::new(dim);
        for (x, failed) in points {
            match pair.classify(x)? {
                Region::FailureDominated if failed => {}
                Region::SafeDominated if !failed => {}
                Region::NonDominated => pair.insert(x, failed)?,
                _ => {
                    return Err(Error::SeparabilityViolation(format!(
                        "point {x:?} with signature {} contradicts its dominated region",
                        u8::from(failed)
                    )))
                }
            }
        }
        Ok(pair)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn failure(&self) -> &Antichain {
        &self.failure
    }

    pub fn safe(&self) -> &Antichain {
        &self.safe
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn classify(&self, x: &[f64]) -> Result<Region> {
        self.check_dim(x)?;
        let failed = self.failure.covers(x);
        let safe = self.safe.covers(x);
        match (failed, safe) {
            (true, true) => Err(Error::SeparabilityViolation(format!(
                "point {x:?} is dominated by both frontiers"
            ))),
            (true, false) => Ok(Region::FailureDominated),
            (false, true) => Ok(Region::SafeDominated),
            (false, false) => Ok(Region::NonDominated),
        }
    }

    /// Short-circuiting classification for samplers. Exclusivity of the two
    /// dominated regions is guaranteed by `insert`, so the first hit decides.
    #[inline]
    pub(crate) fn region_fast(&self, x: &[f64]) -> Region {
        if self.failure.covers(x) {
            Region::FailureDominated
        } else if self.safe.covers(x) {
            Region::SafeDominated
        } else {
            Region::NonDominated
        }
    }

    /// Adds an evaluated point to the side given by its signature.
    pub fn insert(&mut self, x: &[f64], failed: bool) -> Result<()> {
        self.check_dim(x)?;
        if let Some((i, &value)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfUnitCube { index: i, value });
        }
        if failed {
            if let Some(s) = self.safe.iter().find(|s| dominates_unchecked(x, s)) {
                return Err(Error::SeparabilityViolation(format!(
                    "failure point {x:?} dominates safe point {s:?}"
                )));
            }
            self.failure.push(x);
        } else {
            if let Some(f) = self.failure.iter().find(|f| dominates_unchecked(f, x)) {
                return Err(Error::SeparabilityViolation(format!(
                    "safe point {x:?} is dominated by failure point {f:?}"
                )));
            }
            self.safe.push(x);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(failure: &[&[f64]], safe: &[&[f64]]) -> FrontierPair {
        let mut p = FrontierPair::new(failure.first().or(safe.first()).map_or(2, |x| x.len()));
        for f in failure {
            p.insert(f, true).unwrap();
        }
        for s in safe {
            p.insert(s, false).unwrap();
        }
        p
    }

    #[test]
    fn dominance_examples() {
        assert!(dominates(&[0.5, 0.5], &[0.2, 0.3]).unwrap());
        assert!(!dominates(&[0.5, 0.2], &[0.2, 0.3]).unwrap());
        assert!(dominates(&[0.4, 0.7], &[0.4, 0.7]).unwrap());
        assert!(matches!(dominates(&[0.5], &[0.2, 0.3]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn classify_examples() {
        let p = pair(&[&[0.5, 0.5]], &[&[0.8, 0.8]]);
        assert_eq!(p.classify(&[0.1, 0.1]).unwrap(), Region::FailureDominated);
        assert_eq!(p.classify(&[0.9, 0.9]).unwrap(), Region::SafeDominated);
        assert_eq!(p.classify(&[0.9, 0.1]).unwrap(), Region::NonDominated);
        assert!(p.classify(&[0.9]).is_err());
    }

    #[test]
    fn insert_keeps_incomparable_points() {
        let mut p = pair(&[&[0.5, 0.5]], &[]);
        p.insert(&[0.8, 0.3], true).unwrap();
        let mut pts: Vec<Vec<f64>> = p.failure().iter().map(<[f64]>::to_vec).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pts, vec![vec![0.5, 0.5], vec![0.8, 0.3]]);
    }

    #[test]
    fn insert_prunes_dominated_members() {
        let mut p = pair(&[&[0.5, 0.5]], &[]);
        p.insert(&[0.6, 0.6], true).unwrap();
        assert_eq!(p.failure().to_points(), vec![Point(vec![0.6, 0.6])]);

        let mut q = pair(&[], &[&[0.8, 0.8]]);
        q.insert(&[0.7, 0.7], false).unwrap();
        assert_eq!(q.safe().to_points(), vec![Point(vec![0.7, 0.7])]);
    }

    #[test]
    fn separability_is_enforced() {
        let mut p = pair(&[], &[&[0.4, 0.4]]);
        assert!(matches!(p.insert(&[0.5, 0.5], true), Err(Error::SeparabilityViolation(_))));
        let mut q = pair(&[&[0.5, 0.5]], &[]);
        assert!(matches!(q.insert(&[0.3, 0.2], false), Err(Error::SeparabilityViolation(_))));
    }

    #[test]
    fn point_validation() {
        assert!(Point::new(vec![0.0, 1.0]).is_ok());
        assert!(matches!(Point::new(vec![0.5, 1.2]), Err(Error::OutOfUnitCube { index: 1, .. })));
        assert!(Point::new(vec![]).is_err());
    }

    #[test]
    fn from_points_skips_dominated_evaluations() {
        let pts: Vec<(Vec<f64>, bool)> =
            vec![(vec![0.5, 0.5], true), (vec![0.2, 0.2], true), (vec![0.9, 0.9], false)];
        let p = FrontierPair::from_points(2, pts.iter().map(|(x, f)| (x.as_slice(), *f))).unwrap();
        assert_eq!(p.failure().len(), 1);
        assert_eq!(p.safe().len(), 1);
        let bad = [(vec![0.5, 0.5], true), (vec![0.2, 0.2], false)];
        assert!(FrontierPair::from_points(2, bad.iter().map(|(x, f)| (x.as_slice(), *f))).is_err());
    }
}
