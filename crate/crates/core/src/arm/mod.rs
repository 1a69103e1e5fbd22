//! Rigid serial arm driven by single-joint, constant-moment-arm muscles.
//!
//! Link geometry follows the standard Denavit-Hartenberg convention; each
//! muscle spans exactly one joint and every joint carries at least one
//! antagonist pair.

mod dynamics;
mod kinematics;
mod presets;

pub use kinematics::{pseudo_inverse, IkVelocity};
pub use presets::{preset, preset_with_muscle, PRESET_NAMES};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::muscle::{MuscleParams, MuscleState, ACTIVATION_FLOOR};

/// One DH link plus its inertial properties.
///
/// `com` and `inertia` are expressed in the link's own DH frame (the frame
/// at the distal end of the link).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    #[serde(default)]
    pub theta_offset: f64,
    pub mass: f64,
    pub com: [f64; 3],
    /// Principal moments of inertia about the center of mass (kg m^2).
    pub inertia: [f64; 3],
}

impl Link {
    pub fn length(&self) -> f64 {
        self.a.hypot(self.d)
    }
}

/// Routing of one muscle across its joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleRoute {
    pub joint: usize,
    /// Moment arm (m), positive.
    pub moment_arm: f64,
    /// +1 shortens with positive joint rotation (agonist), -1 lengthens.
    pub sign: f64,
    /// MTU length at the reference posture (m).
    pub l_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joint_limits: Vec<(f64, f64)>,
    pub gravity: [f64; 3],
    pub viscous_friction: Vec<f64>,
    /// Posture at which every `MuscleRoute::l_ref` is measured.
    pub q_ref: Vec<f64>,
    pub routing: Vec<MuscleRoute>,
    pub muscles: Vec<MuscleParams>,
    /// Number of leading tip-position coordinates used as task output.
    pub task_dims: usize,
    /// Point mass rigidly attached at the end effector (kg).
    #[serde(default)]
    pub tip_mass: f64,
    /// Neutral co-activation used by the antagonist-pair command mapping.
    pub co_activation: f64,
}

/// Joint-space and muscle state of the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmState {
    pub time: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub muscle_states: Vec<MuscleState>,
}

impl ArmModel {
    pub fn n_joints(&self) -> usize {
        self.links.len()
    }

    pub fn n_muscles(&self) -> usize {
        self.routing.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints();
        let bad = |m: String| Err(Error::InvalidModel(m));
        if n == 0 {
            return bad("arm has no links".into());
        }
        if self.joint_limits.len() != n || self.viscous_friction.len() != n || self.q_ref.len() != n
        {
            return bad("joint_limits, viscous_friction and q_ref need one entry per joint".into());
        }
        if self.muscles.len() != self.routing.len() {
            return bad("one MuscleParams per routed muscle required".into());
        }
        if !(1..=3).contains(&self.task_dims) {
            return bad(format!("task_dims must be 1..=3, got {}", self.task_dims));
        }
        if !(self.tip_mass >= 0.0) {
            return bad(format!("tip_mass must be >= 0, got {}", self.tip_mass));
        }
        if !(self.co_activation > 0.0 && self.co_activation < 1.0) {
            return bad(format!("co_activation must be in (0, 1), got {}", self.co_activation));
        }
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass > 0.0) || link.inertia.iter().any(|&v| !(v > 0.0)) {
                return bad(format!("link {i}: mass and inertia must be positive"));
            }
            if link.a < 0.0 || link.length() < 0.0 {
                return bad(format!("link {i}: negative length"));
            }
        }
        for (j, (lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return bad(format!("joint {j}: limit min must be < max"));
            }
            if self.viscous_friction[j] < 0.0 {
                return bad(format!("joint {j}: negative viscous friction"));
            }
        }
        for (i, (route, params)) in self.routing.iter().zip(&self.muscles).enumerate() {
            params.validate()?;
            if route.joint >= n {
                return bad(format!("muscle {i} spans nonexistent joint {}", route.joint));
            }
            if !(route.moment_arm > 0.0) || !(route.l_ref > 0.0) {
                return bad(format!("muscle {i}: moment arm and l_ref must be positive"));
            }
            if route.sign != 1.0 && route.sign != -1.0 {
                return bad(format!("muscle {i}: sign must be +1 or -1"));
            }
        }
        for j in 0..n {
            let signs: Vec<f64> = self
                .routing
                .iter()
                .filter(|r| r.joint == j)
                .map(|r| r.sign)
                .collect();
            if signs.len() < 2 || !signs.contains(&1.0) || !signs.contains(&-1.0) {
                return bad(format!("joint {j} needs an antagonist muscle pair"));
            }
        }
        Ok(())
    }

    /// MTU lengths (m) at posture `q`.
    pub fn muscle_lengths(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.routing.len(),
            self.routing.iter().map(|r| {
                r.l_ref - r.sign * r.moment_arm * (q[r.joint] - self.q_ref[r.joint])
            }),
        )
    }

    /// Moment-arm matrix `L` (muscles x joints) with `dl = -L dq`.
    pub fn moment_arm_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n_muscles(), self.n_joints());
        for (i, r) in self.routing.iter().enumerate() {
            l[(i, r.joint)] = r.sign * r.moment_arm;
        }
        l
    }

    /// Joint torques produced by tendon forces: `tau = L^T F`, so that the
    /// muscles' power `F . (-dl/dt)` equals `tau . qdot`.
    pub fn joint_torques(&self, forces: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
        if forces.len() != self.n_muscles() {
            return Err(Error::Dimension(format!(
                "{} forces for {} muscles",
                forces.len(),
                self.n_muscles()
            )));
        }
        if let Some((muscle, &force)) = forces.iter().enumerate().find(|(_, f)| !(**f >= 0.0)) {
            return Err(Error::NegativeForce { muscle, force });
        }
        Ok(self.moment_arm_matrix(q).transpose() * forces)
    }

    /// Map per-joint antagonist-pair commands in `[0, 1]` (0.5 neutral) to
    /// per-muscle excitations. Positive deflection drives the agonists,
    /// negative the antagonists; both stay at or above the activation floor.
    pub fn excitations_from_commands(&self, commands: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n_muscles(),
            self.routing.iter().map(|r| {
                let c = commands[r.joint].clamp(0.0, 1.0);
                let d = 2.0 * c - 1.0;
                (self.co_activation + 0.5 * r.sign * d).clamp(ACTIVATION_FLOOR, 1.0)
            }),
        )
    }

    /// Clamp `q` into the joint limits.
    pub fn clamp_to_limits(&self, q: &mut DVector<f64>) {
        for (j, (lo, hi)) in self.joint_limits.iter().enumerate() {
            q[j] = q[j].clamp(*lo, *hi);
        }
    }

    pub fn within_limits(&self, q: &DVector<f64>) -> bool {
        self.joint_limits
            .iter()
            .enumerate()
            .all(|(j, (lo, hi))| q[j] >= *lo && q[j] <= *hi)
    }

    /// State at rest in posture `q` with every muscle in isometric
    /// equilibrium under the given excitations.
    pub fn state_at_rest(&self, q: &DVector<f64>, excitations: &DVector<f64>) -> Result<ArmState> {
        let l = self.muscle_lengths(q);
        let muscle_states = self
            .muscles
            .iter()
            .enumerate()
            .map(|(i, p)| MuscleState::equilibrium(p, excitations[i], l[i]))
            .collect::<Result<Vec<_>>>()?;
        Ok(ArmState {
            time: 0.0,
            q: q.clone(),
            qdot: DVector::zeros(self.n_joints()),
            muscle_states,
        })
    }

    /// Neutral antagonist-pair command vector.
    pub fn neutral_commands(&self) -> Vec<f64> {
        vec![0.5; self.n_joints()]
    }

    /// Let the arm settle under constant commands, starting at `q_ref`.
    pub fn settled_state(&self, commands: &[f64], seconds: f64, dt: f64) -> Result<ArmState> {
        let u = self.excitations_from_commands(commands);
        let q0 = DVector::from_column_slice(&self.q_ref);
        let mut state = self.state_at_rest(&q0, &u)?;
        let f_ext = DVector::zeros(self.task_dims);
        let steps = (seconds / dt).round() as usize;
        for _ in 0..steps {
            state = self.integrate_step(&state, &u, &f_ext, dt)?.0;
        }
        state.time = 0.0;
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm() -> ArmModel {
        preset("planar2x4").unwrap()
    }

    #[test]
    fn lengths_at_reference() {
        let m = arm();
        let q = DVector::from_column_slice(&m.q_ref);
        let l = m.muscle_lengths(&q);
        for (i, r) in m.routing.iter().enumerate() {
            assert_eq!(l[i], r.l_ref);
        }
    }

    #[test]
    fn flexor_shortens_extensor_lengthens() {
        let m = arm();
        let mut q = DVector::from_column_slice(&m.q_ref);
        let l0 = m.muscle_lengths(&q);
        q[0] += 0.5;
        let l1 = m.muscle_lengths(&q);
        let flexor = m.routing.iter().position(|r| r.joint == 0 && r.sign > 0.0).unwrap();
        let extensor = m.routing.iter().position(|r| r.joint == 0 && r.sign < 0.0).unwrap();
        assert!((l1[flexor] - l0[flexor] + 0.01).abs() < 1e-15);
        assert!((l1[extensor] - l0[extensor] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn moment_arm_matrix_shape() {
        let m = arm();
        let q = DVector::from_column_slice(&m.q_ref);
        let l = m.moment_arm_matrix(&q);
        assert_eq!(l.shape(), (4, 2));
        for row in l.row_iter() {
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 1);
        }
        let mut q2 = q.clone();
        q2[1] += 0.3;
        assert_eq!(m.moment_arm_matrix(&q2), l);
    }

    #[test]
    fn torque_examples() {
        let m = arm();
        let q = DVector::from_column_slice(&m.q_ref);
        // equal forces on an antagonist pair with equal moment arms
        let f = DVector::from_column_slice(&[120.0, 120.0, 40.0, 40.0]);
        let tau = m.joint_torques(&f, &q).unwrap();
        assert!(tau.norm() < 1e-12);

        let extensor = m.routing.iter().position(|r| r.joint == 0 && r.sign < 0.0).unwrap();
        let mut f = DVector::zeros(4);
        f[extensor] = 100.0;
        let tau = m.joint_torques(&f, &q).unwrap();
        // L entry -0.02: the extensor pulls the joint toward negative angles
        assert!((tau[0] + 2.0).abs() < 1e-12);
        assert_eq!(tau[1], 0.0);

        assert_eq!(m.joint_torques(&DVector::zeros(4), &q).unwrap().norm(), 0.0);
        f[0] = -1.0;
        assert!(matches!(m.joint_torques(&f, &q), Err(Error::NegativeForce { .. })));
    }

    #[test]
    fn torque_power_matches_muscle_power() {
        let m = arm();
        let q = DVector::from_column_slice(&m.q_ref);
        let f = DVector::from_column_slice(&[30.0, 80.0, 55.0, 10.0]);
        let qdot = DVector::from_column_slice(&[0.7, -1.3]);
        let ldot = -m.moment_arm_matrix(&q) * &qdot;
        let tau = m.joint_torques(&f, &q).unwrap();
        assert!((tau.dot(&qdot) - f.dot(&(-ldot))).abs() < 1e-12);
    }

    #[test]
    fn command_mapping() {
        let m = arm();
        let u = m.excitations_from_commands(&[0.5, 0.5]);
        assert!(u.iter().all(|&v| v == m.co_activation));
        let u = m.excitations_from_commands(&[1.0, 0.0]);
        for (i, r) in m.routing.iter().enumerate() {
            let expect = if (r.joint == 0) == (r.sign > 0.0) { 1.0 } else { ACTIVATION_FLOOR };
            assert_eq!(u[i], expect);
        }
    }

    #[test]
    fn validation_rejects_missing_antagonist() {
        let mut m = arm();
        m.routing[1].sign = 1.0;
        m.routing[0].sign = 1.0;
        assert!(m.validate().is_err());
        let mut m = arm();
        m.links[0].mass = 0.0;
        assert!(m.validate().is_err());
    }
}
