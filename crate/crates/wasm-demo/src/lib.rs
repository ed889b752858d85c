//! Browser bindings. Every function returns JSON text (or a number) so the
//! page needs no generated TypeScript types.

use monorare::estimator::{confidence_interval, mle, LikelihoodData, LikelihoodRecord, MleStatus};
use monorare::{estimate, klee_volume, run, toy_problem, EngineConfig, EstimatorConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct RunView {
    dim: usize,
    p: f64,
    points: Vec<Vec<f64>>,
    failed: Vec<bool>,
    init_calls: usize,
    /// Bounds after each evaluation.
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Running MLE after each stochastic step (null while undefined).
    p_hat: Vec<Option<f64>>,
    failure_frontier: Vec<Vec<f64>>,
    safe_frontier: Vec<Vec<f64>>,
    estimate: monorare::Estimate,
}

/// Runs the engine on the toy problem and returns the whole history.
#[wasm_bindgen]
pub fn toy_run(d: usize, p: f64, n: usize, seed: u32) -> Result<String, JsValue> {
    run_view(d, p, n, seed as u64).map_err(js_err)
}

fn run_view(d: usize, p: f64, n: usize, seed: u64) -> monorare::Result<String> {
    let g = toy_problem(d, p)?;
    let cfg = EngineConfig { n_steps: n, ..EngineConfig::default() };
    let traj = run(&g, &cfg, seed)?;
    let est_cfg = EstimatorConfig::default();
    let mut view = RunView {
        dim: d,
        p,
        points: traj.evaluations().map(|(x, _)| x.to_vec()).collect(),
        failed: traj.evaluations().map(|(_, f)| f).collect(),
        init_calls: traj.init_calls(),
        lower: traj.init.iter().map(|r| r.lower).chain(traj.records.iter().map(|r| r.post_lower)).collect(),
        upper: traj.init.iter().map(|r| r.upper).chain(traj.records.iter().map(|r| r.post_upper)).collect(),
        p_hat: Vec::with_capacity(n),
        failure_frontier: Vec::new(),
        safe_frontier: Vec::new(),
        estimate: estimate(&traj, &est_cfg)?,
    };
    let data = LikelihoodData::from_trajectory(&traj)?;
    for k in 1..=traj.n() {
        let prefix = LikelihoodData::new(data.records()[..k].to_vec())?;
        let fit = mle(&prefix, 1e-10)?;
        view.p_hat.push((fit.status != MleStatus::DegenerateSignatures).then_some(fit.p_hat));
    }
    let fr = traj.frontiers()?;
    view.failure_frontier = fr.failure().iter().map(<[f64]>::to_vec).collect();
    view.safe_frontier = fr.safe().iter().map(<[f64]>::to_vec).collect();
    Ok(serde_json::to_string(&view).expect("view serializes"))
}

/// Volume of the union of boxes `[0, v]`; `flat` holds the vertices row by row.
#[wasm_bindgen]
pub fn union_volume(flat: &[f64], dim: usize) -> Result<f64, JsValue> {
    if dim == 0 || !flat.len().is_multiple_of(dim) {
        return Err(js_err("vertex buffer length must be a multiple of the dimension"));
    }
    let rows: Vec<&[f64]> = flat.chunks_exact(dim).collect();
    klee_volume(&rows, dim).map_err(js_err)
}

#[derive(Serialize)]
struct FitView {
    p_hat: f64,
    status: MleStatus,
    ci_lower: f64,
    ci_upper: f64,
    degenerate: bool,
}

/// MLE and interval from `[[lower, upper, failed], ...]` records.
#[wasm_bindgen]
pub fn fit_records(records_json: &str, level: f64) -> Result<String, JsValue> {
    let raw: Vec<(f64, f64, bool)> = serde_json::from_str(records_json).map_err(js_err)?;
    let data = LikelihoodData::new(raw.into_iter().map(|(l, u, s)| LikelihoodRecord::new(l, u, s)).collect())
        .map_err(js_err)?;
    let fit = mle(&data, 1e-12).map_err(js_err)?;
    let ci = confidence_interval(&fit, &data, level).map_err(js_err)?;
    let view = FitView { p_hat: fit.p_hat, status: fit.status, ci_lower: ci.lower, ci_upper: ci.upper, degenerate: ci.degenerate };
    Ok(serde_json::to_string(&view).expect("view serializes"))
}
