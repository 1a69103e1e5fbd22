//! Learn the benchmark path, then replay the final commands open loop with
//! growing tip loads.
//!
//! ```text
//! cargo run --release --example disturbance_sweep -- [iterations]
//! ```

use myoarm::arm::preset;
use myoarm::ddilc::DdilcParams;
use myoarm::harness::{
    disturbance_sweep, non_decreasing, run_ilc, DisturbanceSpec, LogPolicy, Setup, TrajectorySpec, DEFAULT_FRACTIONS,
};

fn main() -> myoarm::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let setup = Setup::new(preset("planar2x4")?, &TrajectorySpec::default(), 1e-3)?;
    let base = DisturbanceSpec::default();
    let run = run_ilc(&setup, &DdilcParams::default(), &base, iterations, 0, LogPolicy::None)?;
    println!("learned error after {iterations} iterations: {:.4} mm", run.final_metrics().mean_abs_mm);

    let rows = disturbance_sweep(&setup, &run.final_commands, &base, &DEFAULT_FRACTIONS, 10, 0, &|_, _| Ok(()))?;
    println!("load  kg     mean_mm   diverged");
    for r in &rows {
        println!("{:4.2}  {:4.2}  {:8.4}   {}", r.fraction, r.load_kg, r.mean_abs_mm, r.diverged);
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean_abs_mm).collect();
    println!("non-decreasing in load: {}", non_decreasing(&means, 0.0));
    Ok(())
}
