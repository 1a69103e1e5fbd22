//! Let the bare skeleton swing under gravity without muscles or friction
//! and watch the total mechanical energy.

use myoarm::arm::preset;
use nalgebra::DVector;

fn main() -> myoarm::Result<()> {
    let mut arm = preset("planar2x4")?;
    arm.gravity = [0.0, -9.81, 0.0];
    arm.viscous_friction.iter_mut().for_each(|f| *f = 0.0);
    let n = arm.n_joints();
    let mut q = DVector::from_vec(vec![0.3, 0.4]);
    let mut qdot = DVector::zeros(n);
    let zero_tau = DVector::zeros(n);
    let f_ext = DVector::zeros(arm.task_dims);
    let dt = 1e-3;
    let e0 = arm.mechanical_energy(&q, &qdot);
    println!(" t_s     q1       q2      energy_J   drift");
    for k in 0..=10_000 {
        if k % 1000 == 0 {
            let e = arm.mechanical_energy(&q, &qdot);
            println!(
                "{:4.1}  {:7.4}  {:7.4}  {:9.6}  {:.2e}",
                k as f64 * dt,
                q[0],
                q[1],
                e,
                ((e - e0) / e0.abs()).abs()
            );
        }
        let (qn, vn) = arm.rk4_rigid(&q, &qdot, &zero_tau, &f_ext, dt)?;
        q = qn;
        qdot = vn;
    }
    Ok(())
}
