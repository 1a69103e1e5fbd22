//! Tune the task-space PID baseline on a gain grid and compare it with the
//! learning controller on the benchmark path.

use myoarm::arm::preset;
use myoarm::ddilc::DdilcParams;
use myoarm::harness::{run_ilc, tune_pid, DisturbanceSpec, LogPolicy, PidGrid, Setup, TrajectorySpec};

fn main() -> myoarm::Result<()> {
    let setup = Setup::new(preset("planar2x4")?, &TrajectorySpec::default(), 1e-3)?;
    let dist = DisturbanceSpec::default();
    let (gains, pid) = tune_pid(&setup, &PidGrid::default(), &dist, 0)?;
    println!(
        "PID  kp={} ki={} kd={}: mean {:.4} mm, max {:.4} mm",
        gains.kp, gains.ki, gains.kd, pid.mean_abs_mm, pid.max_abs_mm
    );
    let run = run_ilc(&setup, &DdilcParams::default(), &dist, 50, 0, LogPolicy::None)?;
    let m = run.final_metrics();
    println!("DDILC after 50 iterations: mean {:.4} mm, max {:.4} mm", m.mean_abs_mm, m.max_abs_mm);
    println!("ratio {:.3}", m.mean_abs_mm / pid.mean_abs_mm);
    Ok(())
}
