//! Recursive Newton-Euler inverse dynamics on the DH chain, mass matrix by
//! unit-acceleration columns, and the coupled muscle/skeleton tick.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::{ArmModel, ArmState};
use crate::error::{Error, Result};
use crate::muscle::MuscleDiagnostics;

/// Relative pivot floor for the mass-matrix Cholesky factor.
const MIN_PIVOT_RATIO: f64 = 1e-12;

/// Per-tick side information from [`ArmModel::integrate_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub l_mtu: DVector<f64>,
    pub forces: DVector<f64>,
    pub torques: DVector<f64>,
    pub muscle: MuscleDiagnostics,
    pub hit_limit: bool,
}

impl ArmModel {
    /// Joint torques required for the motion `(q, qdot, qddot)`, optionally
    /// including gravity. The tip load is included.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
        with_gravity: bool,
    ) -> DVector<f64> {
        let frames = self.frames(q);
        let n = self.n_joints();
        let mut omega = vec![Vector3::zeros(); n + 1];
        let mut alpha = vec![Vector3::zeros(); n + 1];
        let mut acc = vec![Vector3::zeros(); n + 1];
        let mut acc_com = vec![Vector3::zeros(); n + 1];
        let mut com = vec![Vector3::zeros(); n + 1];
        if with_gravity {
            acc[0] = -Vector3::from(self.gravity);
        }
        for i in 1..=n {
            let z = frames.axis(i - 1);
            let spin = z * qdot[i - 1];
            omega[i] = omega[i - 1] + spin;
            alpha[i] = alpha[i - 1] + z * qddot[i - 1] + omega[i - 1].cross(&spin);
            let r = frames.origin[i] - frames.origin[i - 1];
            acc[i] = acc[i - 1] + alpha[i].cross(&r) + omega[i].cross(&omega[i].cross(&r));
            let rc = frames.rot[i] * Vector3::from(self.links[i - 1].com);
            com[i] = frames.origin[i] + rc;
            acc_com[i] = acc[i] + alpha[i].cross(&rc) + omega[i].cross(&omega[i].cross(&rc));
        }

        let mut tau = DVector::zeros(n);
        let mut f_next = Vector3::zeros();
        let mut n_next = Vector3::zeros();
        for i in (1..=n).rev() {
            let link = &self.links[i - 1];
            let inertia = frames.rot[i]
                * Matrix3::from_diagonal(&Vector3::from(link.inertia))
                * frames.rot[i].transpose();
            let force = acc_com[i] * link.mass;
            let moment = inertia * alpha[i] + omega[i].cross(&(inertia * omega[i]));
            let base = frames.origin[i - 1];
            let mut f = f_next + force;
            let mut m = n_next
                + (frames.origin[i] - base).cross(&f_next)
                + (com[i] - base).cross(&force)
                + moment;
            if i == n && self.tip_mass > 0.0 {
                let load = acc[n] * self.tip_mass;
                f += load;
                m += (frames.origin[n] - base).cross(&load);
            }
            tau[i - 1] = frames.axis(i - 1).dot(&m);
            f_next = f;
            n_next = m;
        }
        tau
    }

    /// Joint-space inertia matrix `H(q)`.
    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n_joints();
        let zero = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            h.set_column(j, &self.inverse_dynamics(q, &zero, &e, false));
        }
        // symmetrize round-off
        (&h + h.transpose()) * 0.5
    }

    /// Coriolis/centrifugal plus gravity torques `C(q, qdot) qdot + G(q)`.
    pub fn bias_torques(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        self.inverse_dynamics(q, qdot, &DVector::zeros(self.n_joints()), true)
    }

    /// `qddot = H^-1 (tau + J^T F_ext - C qdot - G - tau_f qdot)`.
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
        f_ext: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if f_ext.len() != self.task_dims || tau.len() != self.n_joints() {
            return Err(Error::Dimension("forward_dynamics inputs".into()));
        }
        let h = self.mass_matrix(q);
        let chol = h.clone().cholesky().ok_or(Error::IllConditioned(0.0))?;
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for k in 0..h.nrows() {
            let p = l[(k, k)] * l[(k, k)];
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if !(lo > MIN_PIVOT_RATIO * hi) {
            return Err(Error::IllConditioned(lo));
        }
        let mut rhs = tau - self.bias_torques(q, qdot);
        if f_ext.iter().any(|&v| v != 0.0) {
            rhs += self.task_jacobian(q).transpose() * f_ext;
        }
        for j in 0..self.n_joints() {
            rhs[j] -= self.viscous_friction[j] * qdot[j];
        }
        Ok(chol.solve(&rhs))
    }

    /// Kinetic plus gravitational potential energy.
    pub fn mechanical_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        let kinetic = 0.5 * qdot.dot(&(self.mass_matrix(q) * qdot));
        let frames = self.frames(q);
        let g = Vector3::from(self.gravity);
        let mut potential = 0.0;
        for (i, link) in self.links.iter().enumerate() {
            let c = frames.origin[i + 1] + frames.rot[i + 1] * Vector3::from(link.com);
            potential -= link.mass * g.dot(&c);
        }
        potential -= self.tip_mass * g.dot(&frames.origin[self.n_joints()]);
        kinetic + potential
    }

    /// Classic RK4 step of the rigid skeleton under constant torques.
    pub fn rk4_rigid(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
        f_ext: &DVector<f64>,
        dt: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let acc = |q: &DVector<f64>, v: &DVector<f64>| self.forward_dynamics(q, v, tau, f_ext);
        let k1v = acc(q, qdot)?;
        let k1q = qdot.clone();
        let q2 = q + &k1q * (0.5 * dt);
        let v2 = qdot + &k1v * (0.5 * dt);
        let k2v = acc(&q2, &v2)?;
        let k2q = v2;
        let q3 = q + &k2q * (0.5 * dt);
        let v3 = qdot + &k2v * (0.5 * dt);
        let k3v = acc(&q3, &v3)?;
        let k3q = v3;
        let q4 = q + &k3q * dt;
        let v4 = qdot + &k3v * dt;
        let k4v = acc(&q4, &v4)?;
        let k4q = v4;
        let q_next = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        let v_next = qdot + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        Ok((q_next, v_next))
    }

    /// One coupled tick: MTU lengths from posture, muscle steps, joint
    /// torques, RK4 on the skeleton with forces frozen, then hard stops.
    pub fn integrate_step(
        &self,
        state: &ArmState,
        excitations: &DVector<f64>,
        f_ext: &DVector<f64>,
        dt: f64,
    ) -> Result<(ArmState, StepDiagnostics)> {
        if !(dt > 0.0) {
            return Err(Error::Domain {
                name: "dt",
                value: dt,
                domain: "(0, inf)",
            });
        }
        if excitations.len() != self.n_muscles() {
            return Err(Error::Dimension(format!(
                "{} excitations for {} muscles",
                excitations.len(),
                self.n_muscles()
            )));
        }
        let diverged = || Error::Diverged {
            time: state.time,
            last_good: Box::new(state.clone()),
        };

        let l_mtu = self.muscle_lengths(&state.q);
        let mut forces = DVector::zeros(self.n_muscles());
        let mut muscle_states = Vec::with_capacity(self.n_muscles());
        let mut muscle = MuscleDiagnostics::default();
        for (i, params) in self.muscles.iter().enumerate() {
            let step = params
                .step_muscle(&state.muscle_states[i], excitations[i], l_mtu[i], dt)
                .map_err(|e| match e {
                    Error::Domain { name: "l_fiber_norm", .. } => diverged(),
                    other => other,
                })?;
            forces[i] = step.force;
            muscle += step.diagnostics;
            muscle_states.push(step.state);
        }
        let torques = self.joint_torques(&forces, &state.q)?;
        let (mut q, mut qdot) = match self.rk4_rigid(&state.q, &state.qdot, &torques, f_ext, dt) {
            Ok(v) => v,
            Err(Error::IllConditioned(_)) if !state.q.iter().all(|v| v.is_finite()) => {
                return Err(diverged())
            }
            Err(e) => return Err(e),
        };
        if q.iter().chain(qdot.iter()).any(|v| !v.is_finite()) {
            return Err(diverged());
        }
        let mut hit_limit = false;
        for (j, (lo, hi)) in self.joint_limits.iter().enumerate() {
            if q[j] < *lo {
                q[j] = *lo;
                qdot[j] = qdot[j].max(0.0);
                hit_limit = true;
            } else if q[j] > *hi {
                q[j] = *hi;
                qdot[j] = qdot[j].min(0.0);
                hit_limit = true;
            }
        }
        Ok((
            ArmState {
                time: state.time + dt,
                q,
                qdot,
                muscle_states,
            },
            StepDiagnostics {
                l_mtu,
                forces,
                torques,
                muscle,
                hit_limit,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::super::preset;
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn rest_without_gravity_has_zero_acceleration() {
        let m = preset("planar2x4").unwrap();
        let q = v(&[0.3, 1.1]);
        let a = m
            .forward_dynamics(&q, &v(&[0.0, 0.0]), &v(&[0.0, 0.0]), &v(&[0.0, 0.0]))
            .unwrap();
        assert!(a.norm() < 1e-14);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let m = preset("planar2x4").unwrap();
        let h = m.mass_matrix(&v(&[0.2, 0.9]));
        assert!((h.clone() - h.transpose()).norm() < 1e-14);
        assert!(h.cholesky().is_some());
        let s = preset("spatial-ltdm").unwrap();
        let q = v(&s.q_ref);
        let h = s.mass_matrix(&q);
        assert!(h.cholesky().is_some());
    }

    #[test]
    fn planar_mass_matrix_matches_textbook_form() {
        let m = preset("planar2x4").unwrap();
        let (l1, lc1, lc2) = (0.38, 0.19, 0.17);
        let (m1, m2) = (m.links[0].mass, m.links[1].mass);
        let (i1, i2) = (m.links[0].inertia[2], m.links[1].inertia[2]);
        let q2: f64 = 0.8;
        let h = m.mass_matrix(&v(&[0.4, q2]));
        let h11 = i1 + m1 * lc1 * lc1 + i2 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * q2.cos());
        let h12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * q2.cos());
        let h22 = i2 + m2 * lc2 * lc2;
        assert!((h[(0, 0)] - h11).abs() < 1e-12);
        assert!((h[(0, 1)] - h12).abs() < 1e-12);
        assert!((h[(1, 1)] - h22).abs() < 1e-12);
    }

    #[test]
    fn co_activation_at_rest_produces_no_torque() {
        let m = preset("planar2x4").unwrap();
        let q = v(&m.q_ref);
        let u = m.excitations_from_commands(&[0.5, 0.5]);
        let s = m.state_at_rest(&q, &u).unwrap();
        let (next, d) = m.integrate_step(&s, &u, &v(&[0.0, 0.0]), 1e-3).unwrap();
        assert!(d.torques.norm() < 1e-9, "{}", d.torques);
        assert!((next.q - &q).norm() < 1e-12);

        // rising symmetric co-contraction keeps the posture
        let u = m.excitations_from_commands(&[0.5, 0.5]).map(|x| x + 0.3);
        let mut s = s;
        let f0 = m.muscles[0].force(&s.muscle_states[0], m.routing[0].l_ref);
        for _ in 0..100 {
            let (n, d) = m.integrate_step(&s, &u, &v(&[0.0, 0.0]), 1e-3).unwrap();
            assert!(d.torques.norm() < 1e-9);
            s = n;
        }
        assert!((s.q - q).norm() < 1e-12);
        let f1 = m.muscles[0].force(&s.muscle_states[0], m.routing[0].l_ref);
        assert!(f1 > f0);
    }

    #[test]
    fn step_halving_consistency() {
        let m = preset("planar2x4").unwrap();
        let q = v(&m.q_ref);
        let rest = m.state_at_rest(&q, &m.excitations_from_commands(&[0.5, 0.5])).unwrap();
        let u = m.excitations_from_commands(&[0.8, 0.3]);
        let z = v(&[0.0, 0.0]);
        // start mid-motion so every state component is changing
        let mut s = rest.clone();
        for _ in 0..20 {
            s = m.integrate_step(&s, &u, &z, 1e-3).unwrap().0;
        }
        let diff = |dt: f64| {
            let one = m.integrate_step(&s, &u, &z, dt).unwrap().0;
            let h = m.integrate_step(&s, &u, &z, dt / 2.0).unwrap().0;
            let two = m.integrate_step(&h, &u, &z, dt / 2.0).unwrap().0;
            (one.q - two.q).norm() + (one.qdot - two.qdot).norm() * dt
        };
        let d1 = diff(1e-3);
        let d2 = diff(5e-4);
        assert!(d1 > 0.0);
        assert!(d2 < 0.35 * d1, "d1 {d1} d2 {d2}");
    }

    #[test]
    fn hard_stop_clamps_and_zeros_velocity() {
        let m = preset("planar2x4").unwrap();
        let mut q = v(&m.q_ref);
        q[1] = m.joint_limits[1].1 - 1e-6;
        let u = m.excitations_from_commands(&[0.5, 0.5]);
        let mut s = m.state_at_rest(&q, &u).unwrap();
        s.qdot[1] = 5.0;
        let (n, d) = m.integrate_step(&s, &u, &v(&[0.0, 0.0]), 1e-3).unwrap();
        assert!(d.hit_limit);
        assert_eq!(n.q[1], m.joint_limits[1].1);
        assert_eq!(n.qdot[1], 0.0);
    }
}
