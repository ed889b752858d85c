//! Univariate marginal laws used by the distributional transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal cdf.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: rational initial guess refined by one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement against the erfc-based cdf, using the tail that keeps precision.
    let e = if p < 0.5 { normal_cdf(x) - p } else { (1.0 - p) - normal_cdf(-x) };
    let u = e * SQRT_2PI * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Regularized lower incomplete gamma for integer shape, split into (cdf, sf)
/// so that both tails keep relative precision.
fn erlang_cdf_sf(shape: u32, y: f64) -> (f64, f64) {
    if y <= 0.0 {
        return (0.0, 1.0);
    }
    if y.is_infinite() {
        return (1.0, 0.0);
    }
    let a = shape as f64;
    if y < a + 1.0 {
        // Lower tail: e^{-y} Σ_{k>=a} y^k / k!
        let mut term = (a * y.ln() - y - ln_factorial(shape)).exp();
        let mut sum = term;
        let mut k = a;
        loop {
            k += 1.0;
            term *= y / k;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        (sum, 1.0 - sum)
    } else {
        // Upper tail: e^{-y} Σ_{k<a} y^k / k!
        let mut term = (-y).exp();
        let mut sum = term;
        for k in 1..shape {
            term *= y / k as f64;
            sum += term;
        }
        (1.0 - sum, sum)
    }
}

fn erlang_pdf(shape: u32, y: f64) -> f64 {
    if y <= 0.0 {
        return if shape == 1 { 1.0 } else { 0.0 };
    }
    ((shape as f64 - 1.0) * y.ln() - y - ln_factorial(shape - 1)).exp()
}

/// Regularized incomplete beta for integer shapes via the binomial tail
/// `P(Bin(a+b-1, x) >= a)`.
pub fn beta_cdf_int(a: u32, b: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let n = a + b - 1;
    let ln_x = x.ln();
    let ln_1mx = (-x).ln_1p();
    let ln_n = ln_factorial(n);
    (a..=n)
        .map(|j| (ln_n - ln_factorial(j) - ln_factorial(n - j) + j as f64 * ln_x + (n - j) as f64 * ln_1mx).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Quantile of `Beta(a, b)` for integer shapes by bisection.
pub fn beta_quantile_int(a: u32, b: u32, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("beta quantile level {p} outside (0, 1)")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if beta_cdf_int(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A continuous marginal law with strictly increasing cdf on its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { low: f64, high: f64 },
    /// Gamma with integer shape (Erlang).
    Gamma { shape: u32, scale: f64 },
    /// Gumbel (maximum) law truncated to `[lower, upper]`.
    GumbelTruncated { location: f64, scale: f64, lower: f64, upper: f64 },
    /// Normal law truncated to `[lower, upper]`; `upper` defaults to +inf.
    NormalTruncated {
        mean: f64,
        sd: f64,
        lower: f64,
        #[serde(default = "positive_infinity", skip_serializing_if = "is_infinite")]
        upper: f64,
    },
    Triangular { min: f64, mode: f64, max: f64 },
}

fn positive_infinity() -> f64 {
    f64::INFINITY
}

fn is_infinite(x: &f64) -> bool {
    x.is_infinite()
}

fn gumbel_cdf(location: f64, scale: f64, y: f64) -> f64 {
    (-(-(y - location) / scale).exp()).exp()
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { low, high } => low < high,
            Marginal::Gamma { shape, scale } => shape >= 1 && scale > 0.0,
            Marginal::GumbelTruncated { scale, lower, upper, .. } => scale > 0.0 && lower < upper,
            Marginal::NormalTruncated { sd, lower, upper, .. } => sd > 0.0 && lower < upper,
            Marginal::Triangular { min, mode, max } => min < max && min <= mode && mode <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid marginal parameters: {self:?}")))
        }
    }

    /// `(inf, sup)` of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Uniform { low, high } => (low, high),
            Marginal::Gamma { .. } => (0.0, f64::INFINITY),
            Marginal::GumbelTruncated { lower, upper, .. } => (lower, upper),
            Marginal::NormalTruncated { lower, upper, .. } => (lower, upper),
            Marginal::Triangular { min, max, .. } => (min, max),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let (lo, hi) = self.support();
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return 1.0;
        }
        match *self {
            Marginal::Uniform { low, high } => (y - low) / (high - low),
            Marginal::Gamma { shape, scale } => erlang_cdf_sf(shape, y / scale).0,
            Marginal::GumbelTruncated { location, scale, lower, upper } => {
                let fa = gumbel_cdf(location, scale, lower);
                let fb = gumbel_cdf(location, scale, upper);
                (gumbel_cdf(location, scale, y) - fa) / (fb - fa)
            }
            Marginal::NormalTruncated { mean, sd, lower, upper } => {
                let fa = normal_cdf((lower - mean) / sd);
                let fb = normal_cdf((upper - mean) / sd);
                (normal_cdf((y - mean) / sd) - fa) / (fb - fa)
            }
            Marginal::Triangular { min, mode, max } => {
                if y <= mode {
                    (y - min).powi(2) / ((max - min) * (mode - min))
                } else {
                    1.0 - (max - y).powi(2) / ((max - min) * (max - mode))
                }
            }
        }
    }

    /// Inverse cdf on the open interval `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {u} outside (0, 1)")));
        }
        Ok(match *self {
            Marginal::Uniform { low, high } => low + u * (high - low),
            Marginal::Gamma { shape, scale } => scale * erlang_quantile(shape, u),
            Marginal::GumbelTruncated { location, scale, lower, upper } => {
                let fa = gumbel_cdf(location, scale, lower);
                let fb = gumbel_cdf(location, scale, upper);
                let v = fa + u * (fb - fa);
                (location - scale * (-v.ln()).ln()).clamp(lower, upper)
            }
            Marginal::NormalTruncated { mean, sd, lower, upper } => {
                let za = (lower - mean) / sd;
                let zb = (upper - mean) / sd;
                // Work in the tail that holds more mass to limit cancellation.
                let z = if za > 0.0 {
                    let sa = normal_cdf(-za);
                    let sb = normal_cdf(-zb);
                    -normal_quantile(sa - u * (sa - sb))
                } else {
                    let fa = normal_cdf(za);
                    let fb = normal_cdf(zb);
                    normal_quantile(fa + u * (fb - fa))
                };
                (mean + sd * z).clamp(lower, upper)
            }
            Marginal::Triangular { min, mode, max } => {
                let split = (mode - min) / (max - min);
                if u < split {
                    min + (u * (max - min) * (mode - min)).sqrt()
                } else {
                    max - ((1.0 - u) * (max - min) * (max - mode)).sqrt()
                }
            }
        })
    }

    /// Quantile extended to the closed interval where the support is bounded.
    pub fn quantile_closed(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if u == 0.0 && lo.is_finite() {
            Ok(lo)
        } else if u == 1.0 && hi.is_finite() {
            Ok(hi)
        } else {
            self.quantile(u)
        }
    }
}

/// Erlang quantile (unit scale) by safeguarded Newton with bisection fallback.
fn erlang_quantile(shape: u32, u: f64) -> f64 {
    let upper_tail = u > 0.5;
    // Increasing residual in y, computed on the better-conditioned tail.
    let residual = |y: f64| {
        let (cdf, sf) = erlang_cdf_sf(shape, y);
        if upper_tail {
            (1.0 - u) - sf
        } else {
            cdf - u
        }
    };
    let mut lo = 0.0;
    let mut hi = shape as f64 + 1.0;
    while residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    let mut y = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = residual(y);
        if r == 0.0 {
            return y;
        }
        if r < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let slope = erlang_pdf(shape, y);
        let newton = y - r / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - y).abs() <= 1e-14 * y.max(1e-300) || hi - lo <= 1e-14 * hi {
            return next;
        }
        y = next;
    }
    y
}
