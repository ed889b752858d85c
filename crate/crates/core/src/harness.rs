//! Batch front end: configuration, replication studies and output files.
//!
//! Replication `r` of a study with master seed `m` runs the engine with seed
//! `derive_seed(m, TAG_MRM, r)` and plain Monte Carlo with
//! `derive_seed(m, TAG_MC, r)`. Seeds depend only on `(m, r)`, so results do
//! not change with the number of worker threads or their scheduling.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_run, BootstrapConfig, BootstrapReport};
use crate::distributions::Marginal;
use crate::engine::{run, EngineConfig, Trajectory};
use crate::error::Error;
use crate::estimator::{estimate, mc_run, Estimate, EstimatorConfig};
use crate::problems::{hydraulic_problem, toy_problem, HydraulicVersion, MonotoneProblem, PhysicalMap, SignVector};
use crate::rng::derive_seed;
use crate::volume::{klee_volume, volume_mc};
use crate::geometry::Side;

pub const SEED_ENV: &str = "MONORARE_SEED";
pub const TAG_MRM: u64 = 1;
pub const TAG_MC: u64 = 2;
pub const TAG_BOOTSTRAP: u64 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::Runtime(_) => "runtime",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "code": self.exit_code(), "message": self.to_string() }
        })
        .to_string()
    }
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// Problem selection, flattened into the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemSpec {
    Toy {
        d: usize,
        p: f64,
    },
    Hydraulic2,
    Hydraulic4,
    Custom {
        #[serde(default = "custom_name")]
        name: String,
        marginals: Vec<Marginal>,
        signs: Vec<i8>,
        map: PhysicalMap,
        threshold: f64,
        #[serde(default)]
        reference_p: Option<f64>,
    },
}

fn custom_name() -> String {
    "custom".into()
}

impl ProblemSpec {
    pub fn build(&self) -> crate::Result<MonotoneProblem> {
        match self {
            ProblemSpec::Toy { d, p } => toy_problem(*d, *p),
            ProblemSpec::Hydraulic2 => Ok(hydraulic_problem(HydraulicVersion::Dim2)),
            ProblemSpec::Hydraulic4 => Ok(hydraulic_problem(HydraulicVersion::Dim4)),
            ProblemSpec::Custom { name, marginals, signs, map, threshold, reference_p } => {
                let mut problem =
                    MonotoneProblem::new(name.clone(), marginals.clone(), SignVector::new(signs.clone())?, *map, *threshold)?;
                problem.reference_p = *reference_p;
                Ok(problem)
            }
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub problem: ProblemSpec,
    /// Master seed; may be supplied by `MONORARE_SEED` instead.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Shorthand for `engine.n_steps`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default = "one")]
    pub replications: usize,
    /// Budgets reported by `compare`; defaults to the engine's `n_steps`.
    #[serde(default)]
    pub budgets: Vec<usize>,
    /// Saved trajectory for `bootstrap`; a fresh run is made when absent.
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
}

/// A validated configuration with its resolved seed and problem.
#[derive(Debug, Clone)]
pub struct Study {
    pub config: RunConfig,
    pub seed: u64,
    pub problem: MonotoneProblem,
}

impl Study {
    /// Parses `text`; `env_seed` (the value of `MONORARE_SEED`) overrides the config seed.
    pub fn from_json(text: &str, env_seed: Option<&str>) -> HarnessResult<Study> {
        let mut config: RunConfig = serde_json::from_str(text).map_err(config_err)?;
        let seed = match env_seed {
            Some(s) => s
                .trim()
                .parse::<u64>()
                .map_err(|_| HarnessError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?,
            None => config.seed.ok_or_else(|| HarnessError::Config("missing seed".into()))?,
        };
        if let Some(n) = config.n {
            config.engine.n_steps = n;
        }
        config.seed = Some(seed);
        config.engine.validate().map_err(config_err)?;
        if !(config.estimator.tol > 0.0) || !(config.estimator.level > 0.0 && config.estimator.level < 1.0) {
            return Err(HarnessError::Config("estimator tol must be positive and level in (0, 1)".into()));
        }
        if config.estimator.window_start < 1 || config.estimator.window_start > config.engine.n_steps {
            return Err(HarnessError::Config("estimator window_start outside 1..=n".into()));
        }
        if let Some(b) = &config.bootstrap {
            b.validate().map_err(config_err)?;
        }
        if config.budgets.contains(&0) {
            return Err(HarnessError::Config("budgets must be positive".into()));
        }
        let problem = config.problem.build().map_err(config_err)?;
        Ok(Study { config, seed, problem })
    }

    pub fn from_path(path: &Path, env_seed: Option<&str>) -> HarnessResult<Study> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Study::from_json(&text, env_seed)
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> HarnessResult<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Runs `f` on a pool of `jobs` threads (the global pool when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> HarnessResult<T> {
    #[cfg(feature = "parallel")]
    if let Some(j) = jobs {
        if j == 0 {
            return Err(HarnessError::Config("--jobs must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| HarnessError::Io(e.to_string()))?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(f())
}

fn map_indexed<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// One engine run; writes `estimate.json` and `trajectory.csv` to `out`.
pub fn cmd_run(study: &Study, out: &Path) -> HarnessResult<Estimate> {
    let (traj, est) = single_run(study)?;
    write_file(out, "estimate.json", &pretty(&est))?;
    write_file(out, "trajectory.csv", &traj.to_csv())?;
    Ok(est)
}

fn single_run(study: &Study) -> HarnessResult<(Trajectory, Estimate)> {
    let problem = study.problem.clone();
    let traj = run(&problem, &study.config.engine, study.seed)?;
    let est = estimate(&traj, &study.config.estimator)?;
    debug_assert_eq!(problem.calls() as usize, est.calls_total);
    Ok((traj, est))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mrm,
    Mc,
}

/// Summary of one method at one budget over the completed replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub method: Method,
    pub n: usize,
    pub completed: usize,
    pub mean: f64,
    pub sd: f64,
    /// `sd / mean`; absent when the mean is zero.
    pub cv: Option<f64>,
    pub mean_lower: f64,
    pub mean_upper: f64,
    /// Mean bound width over the reference probability.
    pub gamma: Option<f64>,
    pub rmse: Option<f64>,
    pub mean_calls: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub method: Method,
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub problem: String,
    pub replications: usize,
    pub seed: u64,
    pub p_ref: Option<f64>,
    pub incomplete: bool,
    pub failures: Vec<ReplicationFailure>,
    pub rows: Vec<BudgetRow>,
}

impl ComparisonReport {
    pub fn row(&self, method: Method, n: usize) -> Option<&BudgetRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    /// Series for external plotting, one row per method and budget.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("method,n,completed,mean,sd,cv,mean_lower,mean_upper,gamma,rmse,mean_calls\n");
        for r in &self.rows {
            let method = match r.method {
                Method::Mrm => "mrm",
                Method::Mc => "mc",
            };
            out.push_str(&format!(
                "{method},{},{},{},{},{},{},{},{},{},{}\n",
                r.n,
                r.completed,
                r.mean,
                r.sd,
                opt(r.cv),
                r.mean_lower,
                r.mean_upper,
                opt(r.gamma),
                opt(r.rmse),
                r.mean_calls
            ));
        }
        out
    }
}

// (estimate, lower, upper, calls) at each budget.
type Cell = (f64, f64, f64, usize);
type Cells = Vec<Cell>;

fn mrm_replication(study: &Study, budgets: &[usize], r: usize) -> crate::Result<Cells> {
    let n_max = *budgets.iter().max().expect("budgets non-empty");
    let engine = EngineConfig { n_steps: n_max, ..study.config.engine.clone() };
    let problem = study.problem.clone();
    let traj = run(&problem, &engine, derive_seed(study.seed, TAG_MRM, r as u64))?;
    budgets
        .iter()
        .map(|&b| {
            let prefix = traj.prefix(b);
            let est = estimate(&prefix, &study.config.estimator)?;
            Ok((est.p_hat, est.bound_lower, est.bound_upper, est.calls_total))
        })
        .collect()
}

fn mc_replication(study: &Study, budgets: &[usize], r: usize) -> crate::Result<Cells> {
    let n_max = *budgets.iter().max().expect("budgets non-empty");
    let problem = study.problem.clone();
    let mc = mc_run(&problem, n_max, derive_seed(study.seed, TAG_MC, r as u64), true)?;
    Ok(budgets
        .iter()
        .map(|&b| {
            let bounds = mc.bounds[b - 1];
            (mc.prefix_estimate(b), bounds.lower, bounds.upper, b)
        })
        .collect())
}

fn summarize(method: Method, budgets: &[usize], cells: &[Cells], p_ref: Option<f64>) -> Vec<BudgetRow> {
    budgets
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let k = cells.len() as f64;
            let col = |f: &dyn Fn(&Cell) -> f64| cells.iter().map(|c| f(&c[j])).sum::<f64>() / k;
            let mean = col(&|c| c.0);
            let sd = if cells.len() > 1 {
                (cells.iter().map(|c| (c[j].0 - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            let mean_lower = col(&|c| c.1);
            let mean_upper = col(&|c| c.2);
            BudgetRow {
                method,
                n,
                completed: cells.len(),
                mean,
                sd,
                cv: (mean != 0.0).then(|| sd / mean),
                mean_lower,
                mean_upper,
                gamma: p_ref.map(|p| (mean_upper - mean_lower) / p),
                rmse: p_ref.map(|p| (cells.iter().map(|c| (c[j].0 - p).powi(2)).sum::<f64>() / k).sqrt()),
                mean_calls: col(&|c| c.3 as f64),
            }
        })
        .collect()
}

/// MRM against plain Monte Carlo over `replications` seeded runs per method.
///
/// Writes `comparison.json` and `series.csv` to `out` when given.
pub fn cmd_compare(study: &Study, out: Option<&Path>) -> HarnessResult<ComparisonReport> {
    let r_count = study.config.replications;
    if r_count < 2 {
        return Err(HarnessError::Config(format!("compare needs replications >= 2, got {r_count}")));
    }
    let mut budgets = study.config.budgets.clone();
    if budgets.is_empty() {
        budgets.push(study.config.engine.n_steps);
    }
    budgets.sort_unstable();
    budgets.dedup();

    let results = map_indexed(2 * r_count, |i| {
        if i < r_count {
            (Method::Mrm, i, mrm_replication(study, &budgets, i))
        } else {
            (Method::Mc, i - r_count, mc_replication(study, &budgets, i - r_count))
        }
    });
    let p_ref = study.problem.reference();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for method in [Method::Mrm, Method::Mc] {
        let mut cells = Vec::new();
        for (m, r, res) in &results {
            if *m != method {
                continue;
            }
            match res {
                Ok(c) => cells.push(c.clone()),
                Err(e) => failures.push(ReplicationFailure { method, replication: *r, message: e.to_string() }),
            }
        }
        if !cells.is_empty() {
            rows.extend(summarize(method, &budgets, &cells, p_ref));
        }
    }
    let report = ComparisonReport {
        problem: study.problem.name.clone(),
        replications: r_count,
        seed: study.seed,
        p_ref,
        incomplete: !failures.is_empty(),
        failures,
        rows,
    };
    if let Some(dir) = out {
        write_file(dir, "comparison.json", &pretty(&report))?;
        write_file(dir, "series.csv", &report.to_csv())?;
    }
    Ok(report)
}

/// Bias correction of one run; writes `estimate.json`, `bootstrap.json` and `surrogate.json`.
pub fn cmd_bootstrap(study: &Study, out: Option<&Path>) -> HarnessResult<BootstrapReport> {
    let config = study.config.bootstrap.unwrap_or_default();
    config.validate().map_err(config_err)?;
    let traj = match &study.config.trajectory {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
            Trajectory::from_csv(&text).map_err(config_err)?
        }
        None => run(&study.problem.clone(), &study.config.engine, study.seed)?,
    };
    let est = estimate(&traj, &study.config.estimator)?;
    // Replicates share the original sampling design.
    let engine = EngineConfig {
        n_steps: traj.n(),
        init_steps: Some(traj.init_calls()),
        ..study.config.engine.clone()
    };
    let (net, report) = bootstrap_run(
        &traj,
        &est,
        &engine,
        &study.config.estimator,
        &config,
        derive_seed(study.seed, TAG_BOOTSTRAP, 0),
    )?;
    if let Some(dir) = out {
        write_file(dir, "estimate.json", &pretty(&est))?;
        write_file(dir, "bootstrap.json", &pretty(&report))?;
        write_file(dir, "surrogate.json", &format!("{}\n", net.to_json()))?;
    }
    Ok(report)
}

fn default_mc_samples() -> usize {
    1_000_000
}

/// Input of the `volume` command: lower-orthant vertices in the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeRequest {
    pub vertices: Vec<Vec<f64>>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub vertices: usize,
    pub exact: f64,
    pub mc: f64,
    pub mc_std_error: f64,
    pub discrepancy: f64,
    /// Discrepancy in units of the MC standard error (absent when it is zero).
    pub z_score: Option<f64>,
}

pub fn parse_volume_request(text: &str, env_seed: Option<&str>) -> HarnessResult<VolumeRequest> {
    let mut req: VolumeRequest = serde_json::from_str(text).map_err(config_err)?;
    if let Some(s) = env_seed {
        req.seed = s.trim().parse().map_err(|_| HarnessError::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    if req.mc_samples == 0 {
        return Err(HarnessError::Config("mc_samples must be at least 1".into()));
    }
    if let Some(first) = req.vertices.first() {
        let d = first.len();
        for (i, v) in req.vertices.iter().enumerate() {
            if v.len() != d || d == 0 {
                return Err(HarnessError::Config(format!("vertex {i} has dimension {} (expected {d})", v.len())));
            }
            if v.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(HarnessError::Config(format!("vertex {i} leaves the unit cube")));
            }
        }
    }
    Ok(req)
}

/// Exact and Monte Carlo volume of the union of `[0, v]` boxes.
pub fn cmd_volume(req: &VolumeRequest, out: Option<&Path>) -> HarnessResult<VolumeReport> {
    let report = match req.vertices.first() {
        None => VolumeReport { vertices: 0, exact: 0.0, mc: 0.0, mc_std_error: 0.0, discrepancy: 0.0, z_score: None },
        Some(first) => {
            let exact = klee_volume(&req.vertices, first.len())?;
            let mc = volume_mc(&req.vertices, Side::Lower, req.mc_samples, req.seed)?;
            let discrepancy = exact - mc.value;
            VolumeReport {
                vertices: req.vertices.len(),
                exact,
                mc: mc.value,
                mc_std_error: mc.std_error,
                discrepancy,
                z_score: (mc.std_error > 0.0).then(|| discrepancy / mc.std_error),
            }
        }
    };
    if let Some(dir) = out {
        write_file(dir, "volume.json", &pretty(&report))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory_unless_overridden() {
        let text = r#"{"problem": "toy", "d": 2, "p": 0.05}"#;
        let err = Study::from_json(text, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert_eq!(Study::from_json(text, Some("7")).unwrap().seed, 7);
        assert!(Study::from_json(text, Some("x")).is_err());
        let with_seed = r#"{"problem": "toy", "d": 2, "p": 0.05, "seed": 3, "n": 40}"#;
        let study = Study::from_json(with_seed, Some("9")).unwrap();
        assert_eq!((study.seed, study.config.engine.n_steps), (9, 40));
    }

    #[test]
    fn problem_specs_parse() {
        for text in [
            r#"{"problem": "hydraulic2", "seed": 1}"#,
            r#"{"problem": "hydraulic4", "seed": 1}"#,
            r#"{"problem": "custom", "seed": 1, "map": "sum", "threshold": 1.0, "signs": [1, 1],
                "marginals": [{"family": "uniform", "low": 0.0, "high": 1.0},
                              {"family": "uniform", "low": 0.0, "high": 1.0}]}"#,
        ] {
            Study::from_json(text, None).unwrap();
        }
        assert!(Study::from_json(r#"{"problem": "toy", "d": 1, "p": 0.05, "seed": 1}"#, None).is_err());
        assert!(Study::from_json(r#"{"problem": "nope", "seed": 1}"#, None).is_err());
    }

    #[test]
    fn compare_needs_two_replications() {
        let study = Study::from_json(r#"{"problem": "toy", "d": 2, "p": 0.05, "seed": 1, "n": 20}"#, None).unwrap();
        assert_eq!(cmd_compare(&study, None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn compare_reports_exact_call_counts() {
        let study = Study::from_json(
            r#"{"problem": "toy", "d": 2, "p": 0.05, "seed": 1, "n": 60, "replications": 3, "budgets": [20, 60]}"#,
            None,
        )
        .unwrap();
        let report = cmd_compare(&study, None).unwrap();
        assert!(!report.incomplete);
        let init = study.config.engine.resolved_init_steps(2) as f64;
        assert_eq!(report.row(Method::Mrm, 20).unwrap().mean_calls, init + 20.0);
        assert_eq!(report.row(Method::Mc, 60).unwrap().mean_calls, 60.0);
        let g20 = report.row(Method::Mrm, 20).unwrap().gamma.unwrap();
        let g60 = report.row(Method::Mrm, 60).unwrap().gamma.unwrap();
        assert!(g60 <= g20);
    }

    #[test]
    fn volume_command_examples() {
        let req = parse_volume_request(r#"{"vertices": [[0.8, 0.3], [0.5, 0.5], [0.2, 0.9]], "mc_samples": 100000}"#, None)
            .unwrap();
        let rep = cmd_volume(&req, None).unwrap();
        assert!((rep.exact - 0.42).abs() < 1e-12);
        let single = parse_volume_request(r#"{"vertices": [[0.5, 0.4, 0.3]]}"#, None).unwrap();
        assert!((cmd_volume(&single, None).unwrap().exact - 0.06).abs() < 1e-15);
        let empty = parse_volume_request(r#"{"vertices": []}"#, None).unwrap();
        assert_eq!(cmd_volume(&empty, None).unwrap().exact, 0.0);
        assert!(parse_volume_request(r#"{"vertices": [[0.5], [0.2, 0.1]]}"#, None).is_err());
        assert!(parse_volume_request(r#"{"vertices": "x"}"#, None).is_err());
    }

    #[test]
    fn errors_render_as_json() {
        let e = HarnessError::Config("missing seed".into());
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["kind"], "config");
        assert_eq!(v["error"]["code"], 2);
        assert_eq!(HarnessError::Runtime(Error::DegenerateSignatures).exit_code(), 3);
    }
}
