//! Forward kinematics, the task Jacobian, moment arms and redundancy-resolved
//! inverse kinematics on both arm presets.

use myoarm::arm::preset;
use nalgebra::DVector;

fn main() -> myoarm::Result<()> {
    let arm = preset("planar2x4")?;
    let q = DVector::from_vec(arm.q_ref.clone());
    println!("planar2x4 at q_ref = {:?}", q.as_slice());
    println!("tip = {:?}", arm.forward_kinematics(&q).as_slice());
    println!("J =\n{:.4}", arm.task_jacobian(&q));
    println!("moment arms (muscles x joints) =\n{:.4}", arm.moment_arm_matrix(&q).transpose());
    println!("muscle-tendon lengths = {:.4}", arm.muscle_lengths(&q).transpose());

    let target = arm.forward_kinematics(&q) + DVector::from_vec(vec![0.02, 0.05]);
    match arm.inverse_kinematics(&target, &q) {
        Some(sol) => println!("IK to {:?}: q = {:?}", target.as_slice(), sol.as_slice()),
        None => println!("IK to {:?}: unreachable", target.as_slice()),
    }

    let spatial = preset("spatial-ltdm")?;
    let qs = DVector::from_vec(spatial.q_ref.clone());
    let v = spatial.ik_velocity(
        &DVector::from_vec(vec![0.0, 0.0, 0.05]),
        &qs,
        &DVector::from_element(spatial.n_joints(), 0.1),
    )?;
    println!(
        "\nspatial-ltdm: {} joints, {} muscles, tip {:?}",
        spatial.n_joints(),
        spatial.n_muscles(),
        spatial.forward_kinematics(&qs).as_slice()
    );
    println!("qdot for 5 cm/s upward with null-space drift: {:.4}", v.qdot.transpose());
    println!("resulting tip velocity: {:.4}", (spatial.task_jacobian(&qs) * &v.qdot).transpose());
    Ok(())
}
