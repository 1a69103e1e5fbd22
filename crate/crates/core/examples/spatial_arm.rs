//! Settle the seven-joint spatial arm under neutral commands and run a few
//! learning iterations on a short vertical-plane path.

use myoarm::arm::preset;
use myoarm::ddilc::DdilcParams;
use myoarm::harness::{run_ilc, DisturbanceSpec, LogPolicy, Setup, TrajectorySpec};

fn main() -> myoarm::Result<()> {
    let arm = preset("spatial-ltdm")?;
    println!("{}: {} joints, {} muscles, task dims {}", arm.name, arm.n_joints(), arm.n_muscles(), arm.task_dims);
    let spec = TrajectorySpec {
        amplitude: 0.03,
        spatial_period: 0.06,
        duration: 6.0,
        chord: vec![0.0, 0.0, 1.0],
        transverse: vec![0.0, 1.0, 0.0],
        ..TrajectorySpec::default()
    };
    let setup = Setup::new(arm, &spec, 1e-3)?;
    println!("rest tip {:?}", setup.y_d[0].as_slice());
    let run = run_ilc(&setup, &DdilcParams::default(), &DisturbanceSpec::default(), 5, 0, LogPolicy::None)?;
    for r in &run.records {
        println!("iteration {}: mean {:.3} mm{}", r.iteration, r.metrics.mean_abs_mm, if r.diverged { " (diverged)" } else { "" });
    }
    Ok(())
}
