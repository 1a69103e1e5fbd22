//! Print the normalized muscle and tendon curves and a short isometric
//! twitch of one muscle.

use myoarm::muscle::{force_velocity, inverse_force_velocity, MuscleParams, MuscleState};

fn main() -> myoarm::Result<()> {
    let p = MuscleParams::default();
    println!("eps_toe = {:.6}  k_lin = {:.4}", p.eps_toe(), p.k_lin());
    println!("   x      fl      fpe      fv(x-1)   ft(eps0 x)");
    for i in 1..20 {
        let x = i as f64 * 0.1;
        println!(
            "{x:4.1}  {:6.4}  {:7.4}  {:8.4}  {:8.4}",
            p.active_force_length(x)?,
            p.passive_force_length(x)?,
            force_velocity(x - 1.0)?,
            p.tendon_force(p.eps0_t * x),
        );
    }
    let v = inverse_force_velocity(1.3)?;
    println!("fv^-1(1.3) = {v:.6}  (fv of that = {:.9})", force_velocity(v)?);

    // 50 ms full excitation then release, muscle held at its resting length
    let l_mtu = p.isometric_mtu_length(0.01, 1.0)?;
    let mut s = MuscleState::equilibrium(&p, 0.01, l_mtu)?;
    let dt = 1e-3;
    println!("\n t_ms  activation  force_N");
    for k in 0..150 {
        let u = if k < 50 { 1.0 } else { 0.0 };
        let step = p.step_muscle(&s, u, l_mtu, dt)?;
        s = step.state;
        if k % 10 == 9 {
            println!("{:5}  {:10.4}  {:7.2}", k + 1, s.activation, step.force);
        }
    }
    Ok(())
}
