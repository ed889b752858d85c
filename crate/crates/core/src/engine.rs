//! Sequential bound-narrowing loop: deterministic diagonal bisection first,
//! then one uniformly sampled non-dominated point per step.

use std::fmt::Write as _;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FrontierPair, Region};
use crate::problems::LimitState;
use crate::rng::{stream, StreamRng};
use crate::volume::{orthant_increment, orthant_increment_mc, BoundsPair, VolumePolicy};

/// Smallest initialization length `k0` with `k0 >= 1 + ln(1/p) / (d ln 2)`.
pub fn k0_min(p_guess: f64, d: usize) -> usize {
    assert!(p_guess > 0.0 && p_guess < 1.0, "p_guess must lie in (0, 1)");
    assert!(d >= 1, "dimension must be positive");
    let bound = 1.0 + (1.0 / p_guess).ln() / (d as f64 * std::f64::consts::LN_2);
    // Guard against 3.0000000000000004-style rounding above an exact integer.
    let rounded = bound.round();
    if (bound - rounded).abs() < 1e-12 {
        rounded as usize
    } else {
        bound.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub n_steps: usize,
    /// Crude prior value of the probability, used to size the initialization.
    pub p_guess: f64,
    /// `None` selects `max(k0_min(p_guess, d), 4)`.
    pub init_steps: Option<usize>,
    pub max_rejections: u64,
    pub volume_policy: VolumePolicy,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            n_steps: 500,
            p_guess: 0.05,
            init_steps: None,
            max_rejections: 1_000_000,
            volume_policy: VolumePolicy::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 1 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        if !(self.p_guess > 0.0 && self.p_guess < 1.0) {
            return Err(Error::InvalidArgument(format!("p_guess {} outside (0, 1)", self.p_guess)));
        }
        if self.init_steps == Some(0) {
            return Err(Error::InvalidArgument("init_steps must be at least 1".into()));
        }
        if self.max_rejections < 1 {
            return Err(Error::InvalidArgument("max_rejections must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolved_init_steps(&self, d: usize) -> usize {
        self.init_steps.unwrap_or_else(|| k0_min(self.p_guess, d).max(4))
    }
}

/// One deterministic initialization evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub point: Vec<f64>,
    pub signature: bool,
    pub lower: f64,
    pub upper: f64,
}

/// One stochastic step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub pre_lower: f64,
    pub pre_upper: f64,
    pub point: Vec<f64>,
    pub signature: bool,
    pub post_lower: f64,
    pub post_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: usize,
    /// Seed of the run; zero when reloaded from CSV.
    pub seed: u64,
    pub init: Vec<InitRecord>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn init_calls(&self) -> usize {
        self.init.len()
    }

    pub fn calls_total(&self) -> usize {
        self.init.len() + self.records.len()
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Bounds after initialization.
    pub fn initial_bounds(&self) -> BoundsPair {
        self.init.last().map_or(BoundsPair::TRIVIAL, |r| BoundsPair { lower: r.lower, upper: r.upper })
    }

    pub fn final_bounds(&self) -> BoundsPair {
        self.records
            .last()
            .map_or_else(|| self.initial_bounds(), |r| BoundsPair { lower: r.post_lower, upper: r.post_upper })
    }

    /// First `n` stochastic steps of this trajectory.
    pub fn prefix(&self, n: usize) -> Trajectory {
        Trajectory {
            dim: self.dim,
            seed: self.seed,
            init: self.init.clone(),
            records: self.records[..n.min(self.records.len())].to_vec(),
        }
    }

    /// Every evaluated point with its signature, in evaluation order.
    pub fn evaluations(&self) -> impl Iterator<Item = (&[f64], bool)> + '_ {
        self.init
            .iter()
            .map(|r| (r.point.as_slice(), r.signature))
            .chain(self.records.iter().map(|r| (r.point.as_slice(), r.signature)))
    }

    /// Rebuilds the frontiers at the end of the run.
    pub fn frontiers(&self) -> Result<FrontierPair> {
        FrontierPair::from_points(self.dim, self.evaluations())
    }

    /// CSV with one row per evaluation. Initialization rows carry `k = 0`;
    /// `p_minus`/`p_plus` are the bounds after the row's evaluation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k");
        for i in 1..=self.dim {
            let _ = write!(out, ",x_{i}");
        }
        out.push_str(",xi,p_minus,p_plus,calls_cum\n");
        let mut calls = 0usize;
        let mut row = |out: &mut String, k: usize, point: &[f64], sig: bool, lo: f64, hi: f64| {
            calls += 1;
            let _ = write!(out, "{k}");
            for c in point {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{},{lo},{hi},{calls}", u8::from(sig));
        };
        for r in &self.init {
            row(&mut out, 0, &r.point, r.signature, r.lower, r.upper);
        }
        for r in &self.records {
            row(&mut out, r.k, &r.point, r.signature, r.post_lower, r.post_upper);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let bad = |line: usize, msg: &str| Error::InvalidArgument(format!("trajectory CSV line {line}: {msg}"));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 6 || columns[0] != "k" || columns[columns.len() - 4..] != ["xi", "p_minus", "p_plus", "calls_cum"] {
            return Err(bad(1, "unexpected header"));
        }
        let dim = columns.len() - 5;
        let mut traj = Trajectory { dim, seed: 0, init: Vec::new(), records: Vec::new() };
        let mut last = BoundsPair::TRIVIAL;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(bad(idx + 1, "wrong number of fields"));
            }
            let k: usize = fields[0].parse().map_err(|_| bad(idx + 1, "bad k"))?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(idx + 1, "bad number"))?;
            let point = nums[..dim].to_vec();
            let signature = match fields[dim + 1] {
                "1" => true,
                "0" => false,
                _ => return Err(bad(idx + 1, "xi must be 0 or 1")),
            };
            let post = BoundsPair { lower: nums[dim + 1], upper: nums[dim + 2] };
            if k == 0 {
                if !traj.records.is_empty() {
                    return Err(bad(idx + 1, "initialization row after stochastic rows"));
                }
                traj.init.push(InitRecord { point, signature, lower: post.lower, upper: post.upper });
            } else {
                if k != traj.records.len() + 1 {
                    return Err(bad(idx + 1, "step indices must be consecutive"));
                }
                traj.records.push(StepRecord {
                    k,
                    pre_lower: last.lower,
                    pre_upper: last.upper,
                    point,
                    signature,
                    post_lower: post.lower,
                    post_upper: post.upper,
                });
            }
            last = post;
        }
        Ok(traj)
    }
}

/// Frontiers together with their dominated volumes, updated incrementally.
#[derive(Debug, Clone)]
pub struct DominatedSpace {
    frontiers: FrontierPair,
    failure_volume: f64,
    safe_volume: f64,
    policy: VolumePolicy,
    mc_rng: StreamRng,
}

impl DominatedSpace {
    pub fn new(dim: usize, policy: VolumePolicy) -> Self {
        DominatedSpace {
            frontiers: FrontierPair::new(dim),
            failure_volume: 0.0,
            safe_volume: 0.0,
            policy,
            mc_rng: stream(policy.seed, 1),
        }
    }

    pub fn frontiers(&self) -> &FrontierPair {
        &self.frontiers
    }

    pub fn bounds(&self) -> BoundsPair {
        BoundsPair { lower: self.failure_volume, upper: 1.0 - self.safe_volume }
    }

    /// Inserts a point and adds the volume it newly dominates.
    pub fn insert(&mut self, x: &[f64], failed: bool) -> Result<()> {
        let chain = if failed { self.frontiers.failure() } else { self.frontiers.safe() };
        let added = if self.policy.is_exact(self.frontiers.dim()) {
            orthant_increment(x, chain)
        } else {
            orthant_increment_mc(x, chain, self.policy.mc_samples, &mut self.mc_rng)
        };
        self.frontiers.insert(x, failed)?;
        if failed {
            self.failure_volume += added;
        } else {
            self.safe_volume += added;
        }
        if self.failure_volume + self.safe_volume > 1.0 {
            // Rounding can only push the sum past 1 by a few ulps.
            let excess = self.failure_volume + self.safe_volume - 1.0;
            if failed {
                self.failure_volume -= excess;
            } else {
                self.safe_volume -= excess;
            }
        }
        Ok(())
    }
}

fn signature_of(g: &dyn LimitState, x: &[f64]) -> Result<bool> {
    let value = g.evaluate(x)?;
    if value.is_nan() {
        return Err(Error::Evaluation(format!("g returned NaN at {x:?}")));
    }
    Ok(value <= 0.0)
}

/// Dichotomic search along the diagonal `t·1`; moves up after a failure and
/// down after a safe evaluation.
pub fn diagonal_init(g: &dyn LimitState, steps: usize, space: &mut DominatedSpace) -> Result<Vec<InitRecord>> {
    let d = g.dim();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut records = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = 0.5 * (lo + hi);
        let x = vec![t; d];
        let failed = signature_of(g, &x)?;
        if space.frontiers().classify(&x)? == Region::NonDominated {
            space.insert(&x, failed)?;
        }
        if failed {
            lo = t;
        } else {
            hi = t;
        }
        let b = space.bounds();
        records.push(InitRecord { point: x, signature: failed, lower: b.lower, upper: b.upper });
    }
    let b = space.bounds();
    if b.lower <= 0.0 || b.upper >= 1.0 {
        return Err(Error::InitFailed { steps, lower: b.lower, upper: b.upper });
    }
    Ok(records)
}

/// Uniform draw on the non-dominated region by rejection from the cube.
pub fn sample_nondominated(frontiers: &FrontierPair, rng: &mut StreamRng, max_rejections: u64) -> Result<Vec<f64>> {
    let mut x = vec![0.0; frontiers.dim()];
    for _ in 0..max_rejections {
        for c in x.iter_mut() {
            *c = rng.sample(Open01);
        }
        if frontiers.region_fast(&x) == Region::NonDominated {
            return Ok(x);
        }
    }
    Err(Error::RejectionBudgetExceeded(max_rejections as usize))
}

/// Live state of a run after initialization.
#[derive(Debug, Clone)]
pub struct EngineState {
    pub space: DominatedSpace,
    pub rng: StreamRng,
    pub max_rejections: u64,
    pub steps_taken: usize,
}

impl EngineState {
    pub fn calls(&self) -> usize {
        self.steps_taken
    }
}

/// One sample, one evaluation, one update.
pub fn step(state: &mut EngineState, g: &dyn LimitState) -> Result<StepRecord> {
    let pre = state.space.bounds();
    let x = sample_nondominated(state.space.frontiers(), &mut state.rng, state.max_rejections)?;
    let failed = signature_of(g, &x)?;
    state.space.insert(&x, failed)?;
    state.steps_taken += 1;
    let post = state.space.bounds();
    Ok(StepRecord {
        k: state.steps_taken,
        pre_lower: pre.lower,
        pre_upper: pre.upper,
        point: x,
        signature: failed,
        post_lower: post.lower,
        post_upper: post.upper,
    })
}

/// Initializes and returns the state ready for stochastic steps.
pub fn start(g: &dyn LimitState, config: &EngineConfig, seed: u64) -> Result<(EngineState, Vec<InitRecord>)> {
    config.validate()?;
    let d = g.dim();
    let mut policy = config.volume_policy;
    policy.seed = crate::rng::derive_seed(seed, 0x0076_6f6c, policy.seed);
    let mut space = DominatedSpace::new(d, policy);
    let init = diagonal_init(g, config.resolved_init_steps(d), &mut space)?;
    let state = EngineState { space, rng: stream(seed, 0), max_rejections: config.max_rejections, steps_taken: 0 };
    Ok((state, init))
}

/// Full run: initialization followed by `n_steps` stochastic steps.
pub fn run(g: &dyn LimitState, config: &EngineConfig, seed: u64) -> Result<Trajectory> {
    let (mut state, init) = start(g, config, seed)?;
    let mut records = Vec::with_capacity(config.n_steps);
    for _ in 0..config.n_steps {
        records.push(step(&mut state, g)?);
    }
    Ok(Trajectory { dim: g.dim(), seed, init, records })
}
