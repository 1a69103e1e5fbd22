use std::f64::consts::FRAC_PI_2;

use super::{ArmModel, Link, MuscleRoute};
use crate::error::{Error, Result};
use crate::muscle::MuscleParams;

pub const PRESET_NAMES: [&str; 2] = ["planar2x4", "spatial-ltdm"];

/// Normalized fiber length at the reference posture under neutral
/// co-activation. Sits on the ascending limb of the force-length curve so
/// antagonist pairs are stiffening.
const REF_FIBER_LENGTH: f64 = 0.75;
const MOMENT_ARM: f64 = 0.02;
const CO_ACTIVATION: f64 = 0.5;

pub fn preset(name: &str) -> Result<ArmModel> {
    preset_with_muscle(name, &MuscleParams::default())
}

/// Build a preset with `base` as the template for every muscle. Force
/// shares and reference lengths are derived from it.
pub fn preset_with_muscle(name: &str, base: &MuscleParams) -> Result<ArmModel> {
    base.validate()?;
    match name {
        "planar2x4" => planar2x4(base),
        "spatial-ltdm" => spatial_ltdm(base),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Uniform slender rod spanning the link, ending at the frame origin.
fn rod(a: f64, alpha: f64, d: f64, mass: f64) -> Link {
    let len = a.hypot(d).max(0.05);
    let transverse = mass * len * len / 12.0;
    let axial = 1e-4 * mass.max(0.05);
    let axial = axial.max(transverse * 0.1);
    let (com, inertia) = if a > 0.0 {
        ([-a / 2.0, 0.0, 0.0], [axial, transverse, transverse])
    } else {
        // d-offset links lie along the previous z axis, which is
        // (0, sin alpha, cos alpha) in this frame
        (
            [0.0, -d / 2.0 * alpha.sin(), -d / 2.0 * alpha.cos()],
            [transverse, axial, transverse],
        )
    };
    Link {
        a,
        alpha,
        d,
        theta_offset: 0.0,
        mass,
        com,
        inertia,
    }
}

fn routes(
    muscles_per_joint: &[Vec<(f64, f64)>],
    base: &MuscleParams,
) -> Result<(Vec<MuscleRoute>, Vec<MuscleParams>)> {
    let mut routing = Vec::new();
    let mut params = Vec::new();
    for (joint, list) in muscles_per_joint.iter().enumerate() {
        for &(sign, force_share) in list {
            let p = MuscleParams {
                f0_max: base.f0_max * force_share,
                ..*base
            };
            routing.push(MuscleRoute {
                joint,
                moment_arm: MOMENT_ARM,
                sign,
                l_ref: p.isometric_mtu_length(CO_ACTIVATION, REF_FIBER_LENGTH)?,
            });
            params.push(p);
        }
    }
    Ok((routing, params))
}

/// Two-link planar arm in a horizontal plane, one antagonist pair per joint.
fn planar2x4(base: &MuscleParams) -> Result<ArmModel> {
    let pair = vec![(1.0, 1.0), (-1.0, 1.0)];
    let (routing, muscles) = routes(&[pair.clone(), pair], base)?;
    let l1 = rod(0.38, 0.0, 0.0, 1.0);
    let l2 = rod(0.34, 0.0, 0.0, 0.8);
    Ok(ArmModel {
        name: "planar2x4".into(),
        links: vec![l1, l2],
        joint_limits: vec![(-2.5, 1.0), (0.05, 2.8)],
        gravity: [0.0, 0.0, -9.81],
        viscous_friction: vec![0.2, 0.2],
        q_ref: vec![-1.0, 1.75],
        routing,
        muscles,
        task_dims: 2,
        tip_mass: 0.0,
        co_activation: CO_ACTIVATION,
    })
}

/// Seven-joint arm with 15 single-joint muscles: three shoulder joints
/// (3 + 2 + 2 muscles), elbow, forearm rotation and two wrist joints.
fn spatial_ltdm(base: &MuscleParams) -> Result<ArmModel> {
    let pair = || vec![(1.0, 1.0), (-1.0, 1.0)];
    let triple = vec![(1.0, 0.5), (1.0, 0.5), (-1.0, 1.0)];
    let (routing, muscles) = routes(
        &[triple, pair(), pair(), pair(), pair(), pair(), pair()],
        base,
    )?;
    let links = vec![
        rod(0.0, -FRAC_PI_2, 0.0, 0.1),
        rod(0.0, FRAC_PI_2, 0.0, 0.1),
        rod(0.0, -FRAC_PI_2, 0.38, 1.0),
        rod(0.0, FRAC_PI_2, 0.0, 0.1),
        rod(0.0, -FRAC_PI_2, 0.34, 0.6),
        rod(0.0, FRAC_PI_2, 0.0, 0.05),
        rod(0.262, 0.0, 0.0, 0.3),
    ];
    let joint_limits = vec![
        (0.0, 0.4),
        (0.0, 1.1),
        (0.0, 1.1),
        (0.0, 1.57),
        (0.0, 1.57),
        (-1.0, 1.0),
        (-1.0, 1.0),
    ];
    let q_ref = joint_limits.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    Ok(ArmModel {
        name: "spatial-ltdm".into(),
        links,
        joint_limits,
        gravity: [0.0, 0.0, -9.81],
        viscous_friction: vec![0.2; 7],
        q_ref,
        routing,
        muscles,
        task_dims: 3,
        tip_mass: 0.0,
        co_activation: CO_ACTIVATION,
    })
}
