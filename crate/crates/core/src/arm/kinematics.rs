use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::ArmModel;
use crate::error::{Error, Result};

/// Smallest singular value of `J` below which the damped inverse is used.
const SINGULAR_THRESHOLD: f64 = 1e-4;
const DLS_DAMPING: f64 = 1e-6;

/// World pose of every DH frame, index 0 being the base.
pub(crate) struct Frames {
    pub rot: Vec<Matrix3<f64>>,
    pub origin: Vec<Vector3<f64>>,
}

impl Frames {
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.rot[i].column(2).into_owned()
    }
}

/// Result of [`ArmModel::ik_velocity`].
#[derive(Debug, Clone, PartialEq)]
pub struct IkVelocity {
    pub qdot: DVector<f64>,
    /// True when the damped pseudo-inverse was engaged.
    pub singular: bool,
}

impl ArmModel {
    pub(crate) fn frames(&self, q: &DVector<f64>) -> Frames {
        let n = self.n_joints();
        let mut rot = Vec::with_capacity(n + 1);
        let mut origin = Vec::with_capacity(n + 1);
        rot.push(Matrix3::identity());
        origin.push(Vector3::zeros());
        for (i, link) in self.links.iter().enumerate() {
            let theta = q[i] + link.theta_offset;
            let (st, ct) = theta.sin_cos();
            let (sa, ca) = link.alpha.sin_cos();
            let local = Matrix3::new(ct, -st * ca, st * sa, st, ct * ca, -ct * sa, 0.0, sa, ca);
            let offset = Vector3::new(link.a * ct, link.a * st, link.d);
            let r = rot[i] * local;
            let o = origin[i] + rot[i] * offset;
            rot.push(r);
            origin.push(o);
        }
        Frames { rot, origin }
    }

    /// Full 3-D end-effector position.
    pub fn tip_position(&self, q: &DVector<f64>) -> Vector3<f64> {
        *self.frames(q).origin.last().unwrap()
    }

    /// End-effector position restricted to the task coordinates.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = self.tip_position(q);
        DVector::from_iterator(self.task_dims, p.iter().copied().take(self.task_dims))
    }

    /// Full 3 x n translational Jacobian of the tip.
    pub(crate) fn tip_jacobian(&self, frames: &Frames) -> DMatrix<f64> {
        let n = self.n_joints();
        let tip = frames.origin[n];
        let mut j = DMatrix::zeros(3, n);
        for i in 0..n {
            let col = frames.axis(i).cross(&(tip - frames.origin[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&col);
        }
        j
    }

    /// Task Jacobian (task_dims x joints).
    pub fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let full = self.tip_jacobian(&self.frames(q));
        full.rows(0, self.task_dims).into_owned()
    }

    /// Redundancy-resolved joint velocity
    /// `qdot = J+ pdot + (I - J+ J) k_q`, `J+ = J^T (J J^T)^-1`.
    pub fn ik_velocity(
        &self,
        p_dot: &DVector<f64>,
        q: &DVector<f64>,
        k_q: &DVector<f64>,
    ) -> Result<IkVelocity> {
        let n = self.n_joints();
        if p_dot.len() != self.task_dims || k_q.len() != n {
            return Err(Error::Dimension("ik_velocity inputs".into()));
        }
        let j = self.task_jacobian(q);
        let (pinv, singular) = pseudo_inverse(&j);
        let null = DMatrix::identity(n, n) - &pinv * &j;
        Ok(IkVelocity {
            qdot: &pinv * p_dot + null * k_q,
            singular,
        })
    }

    /// Position IK by Newton iteration on the redundancy-resolved velocity
    /// map, warm-started at `seed`. Fails if the target is not reached
    /// within the joint limits.
    pub fn inverse_kinematics(
        &self,
        target: &DVector<f64>,
        seed: &DVector<f64>,
    ) -> Option<DVector<f64>> {
        let mut q = seed.clone();
        let zero = DVector::zeros(self.n_joints());
        for _ in 0..100 {
            let err = target - self.forward_kinematics(&q);
            if err.norm() < 1e-10 {
                return self.within_limits(&q).then_some(q);
            }
            let step = self.ik_velocity(&err, &q, &zero).ok()?;
            let scale = (0.2 / step.qdot.amax()).min(1.0);
            q += step.qdot * scale;
        }
        None
    }
}

/// Moore-Penrose right inverse, switching to damped least squares when the
/// smallest singular value drops below the threshold.
pub fn pseudo_inverse(j: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let sigma_min = j
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let singular = !(sigma_min >= SINGULAR_THRESHOLD);
    let mut jjt = j * j.transpose();
    if singular {
        for k in 0..jjt.nrows() {
            jjt[(k, k)] += DLS_DAMPING;
        }
    }
    let inv = jjt
        .try_inverse()
        .unwrap_or_else(|| DMatrix::zeros(j.nrows(), j.nrows()));
    (j.transpose() * inv, singular)
}
