//! Learn to track the benchmark sine path on the planar arm and print the
//! error curve.
//!
//! ```text
//! cargo run --release --example ddilc_tracking -- [iterations]
//! ```

use myoarm::arm::preset;
use myoarm::ddilc::DdilcParams;
use myoarm::harness::{run_ilc, DisturbanceSpec, LogPolicy, Setup, TrajectorySpec};

fn main() -> myoarm::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(50);
    let setup = Setup::new(preset("planar2x4")?, &TrajectorySpec::default(), 1e-3)?;
    let run = run_ilc(
        &setup,
        &DdilcParams::default(),
        &DisturbanceSpec::default(),
        iterations,
        0,
        LogPolicy::None,
    )?;
    println!("sensitivity (m per unit command):\n{:.4}", run.sensitivity);
    println!("iter  mean_mm    mse_mm2    max_mm");
    for r in &run.records {
        println!(
            "{:4}  {:9.4}  {:9.4}  {:8.3}{}",
            r.iteration,
            r.metrics.mean_abs_mm,
            r.metrics.mse_mm2,
            r.metrics.max_abs_mm,
            if r.diverged { "  diverged" } else { "" }
        );
    }
    for e in &run.events {
        println!("monitor: after iteration {} gain scale {} (restored {})", e.iteration, e.beta_scale, e.restored_from);
    }
    Ok(())
}
