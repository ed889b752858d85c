//! Estimate a 5% failure probability in dimension 3 with 300 calls.
//!
//! `cargo run --release -p monorare-core --example toy [seed]`

use monorare::{estimate, run, toy_problem, EngineConfig, EstimatorConfig};

fn main() -> monorare::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let g = toy_problem(3, 0.05)?;
    let traj = run(&g, &EngineConfig { n_steps: 300, ..EngineConfig::default() }, seed)?;
    let est = estimate(&traj, &EstimatorConfig::default())?;
    println!("calls      {}", est.calls_total);
    println!("bounds     [{:.5}, {:.5}]", est.bound_lower, est.bound_upper);
    println!("p_hat      {:.5}  (true 0.05)", est.p_hat);
    println!("95% CI     [{:.5}, {:.5}]", est.ci_lower, est.ci_upper);
    Ok(())
}
