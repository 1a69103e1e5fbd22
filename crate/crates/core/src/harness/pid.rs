//! Task-space PID baseline.
//!
//! The tip error drives a PID force, `J^T` maps it to joint torques and each
//! torque is divided by the joint's isometric torque per unit command to
//! get an offset from the neutral command. The same antagonist mapping as
//! the learning controller then turns commands into excitations.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, ArmState};
use crate::error::{Error, Result};
use crate::muscle::force_velocity;

use super::metrics::{compute_metrics, Metrics};
use super::trial::{run_trial, Controller, DisturbanceSpec, Setup, TrialLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    /// N/m
    pub kp: f64,
    /// N/(m s)
    pub ki: f64,
    /// N s/m
    pub kd: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 400.0,
            ki: 400.0,
            kd: 20.0,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !v.is_finite() {
                return Err(Error::ConfigInvalid {
                    field: name.into(),
                    message: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Joint torque per unit command offset at the given state, summed over
/// the muscles crossing each joint.
pub fn torque_per_command(arm: &ArmModel, state: &ArmState) -> Result<Vec<f64>> {
    let fv0 = force_velocity(0.0)?;
    let mut gain = vec![0.0; arm.n_joints()];
    for ((route, params), ms) in arm.routing.iter().zip(&arm.muscles).zip(&state.muscle_states) {
        let fl = params.active_force_length(ms.l_fiber_norm)?;
        gain[route.joint] += route.moment_arm.abs() * params.f0_max * params.pennation_factor * fl * fv0;
    }
    Ok(gain)
}

pub struct PidController {
    pub gains: PidGains,
    arm: ArmModel,
    torque_gain: Vec<f64>,
    dt: f64,
    integral: DVector<f64>,
    e_prev: Option<DVector<f64>>,
}

impl PidController {
    pub fn new(setup: &Setup, gains: PidGains) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            gains,
            torque_gain: torque_per_command(&setup.arm, &setup.start)?,
            arm: setup.arm.clone(),
            dt: setup.dt,
            integral: DVector::zeros(setup.arm.task_dims),
            e_prev: None,
        })
    }

    /// Task-space PID force for error `e`, updating the integral and
    /// derivative memory.
    pub fn force(&mut self, e: &DVector<f64>) -> DVector<f64> {
        self.integral += e * self.dt;
        let de = match &self.e_prev {
            Some(prev) => (e - prev) / self.dt,
            None => DVector::zeros(e.len()),
        };
        self.e_prev = Some(e.clone());
        e * self.gains.kp + &self.integral * self.gains.ki + de * self.gains.kd
    }
}

impl Controller for PidController {
    fn begin(&mut self) {
        self.integral.fill(0.0);
        self.e_prev = None;
    }

    fn command(
        &mut self,
        t: usize,
        y: &DVector<f64>,
        y_d: &[DVector<f64>],
        state: &ArmState,
    ) -> (Vec<f64>, DVector<f64>) {
        let e = &y_d[t.min(y_d.len() - 1)] - y;
        let f = self.force(&e);
        let tau = self.arm.task_jacobian(&state.q).transpose() * &f;
        let commands = tau
            .iter()
            .zip(&self.torque_gain)
            .map(|(t, g)| (0.5 + t / g).clamp(0.0, 1.0))
            .collect();
        (commands, f)
    }
}

/// One trial under the PID baseline.
pub fn pid_baseline(
    setup: &Setup,
    gains: PidGains,
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> Result<TrialLog> {
    let mut ctl = PidController::new(setup, gains)?;
    run_trial(setup, &mut ctl, disturbance, seed)
}

/// Gain grid searched by [`tune_pid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGrid {
    pub kp: Vec<f64>,
    /// Integral gain as a multiple of `kp`, 1/s.
    pub ki_ratio: Vec<f64>,
    /// Derivative gain as a multiple of `kp`, s.
    pub kd_ratio: Vec<f64>,
}

impl Default for PidGrid {
    fn default() -> Self {
        Self {
            kp: vec![100.0, 200.0, 400.0, 800.0],
            ki_ratio: vec![0.0, 8.0, 16.0, 32.0],
            kd_ratio: vec![0.05, 0.1, 0.2],
        }
    }
}

impl PidGrid {
    pub fn candidates(&self) -> Vec<PidGains> {
        let mut out = Vec::new();
        for &kp in &self.kp {
            for &ri in &self.ki_ratio {
                for &rd in &self.kd_ratio {
                    out.push(PidGains {
                        kp,
                        ki: kp * ri,
                        kd: kp * rd,
                    });
                }
            }
        }
        out
    }
}

/// Grid search for the gains with the lowest mean error among trials that
/// complete. Ties go to the earlier candidate.
pub fn tune_pid(
    setup: &Setup,
    grid: &PidGrid,
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> Result<(PidGains, Metrics)> {
    let results: Vec<Result<Option<(PidGains, Metrics)>>> = grid
        .candidates()
        .into_par_iter()
        .map(|g| {
            let log = pid_baseline(setup, g, disturbance, seed)?;
            if !log.completed() {
                return Ok(None);
            }
            Ok(Some((g, compute_metrics(&log)?)))
        })
        .collect();
    let mut best: Option<(PidGains, Metrics)> = None;
    for r in results {
        if let Some((g, m)) = r? {
            if best.map_or(true, |(_, b)| m.mean_abs_mm < b.mean_abs_mm) {
                best = Some((g, m));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidModel("no PID candidate completed a trial".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::preset;
    use crate::harness::trajectory::TrajectorySpec;
    use crate::harness::trial::ZeroController;

    fn setup() -> Setup {
        let spec = TrajectorySpec {
            duration: 1.0,
            ..TrajectorySpec::default()
        };
        Setup::new(preset("planar2x4").unwrap(), &spec, 1e-3).unwrap()
    }

    #[test]
    fn zero_gains_match_open_loop_null() {
        let s = setup();
        let zero = PidGains {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
        };
        let dist = DisturbanceSpec::default();
        let a = pid_baseline(&s, zero, &dist, 0).unwrap();
        let b = run_trial(&s, &mut ZeroController, &dist, 0).unwrap();
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn zero_error_gives_zero_force() {
        let s = setup();
        let mut pid = PidController::new(&s, PidGains::default()).unwrap();
        let f = pid.force(&DVector::zeros(2));
        assert_eq!(f, DVector::zeros(2));
        let y = s.y_d[0].clone();
        let (c, _) = pid.command(0, &y, &s.y_d, &s.start);
        assert_eq!(c, vec![0.5, 0.5]);
    }

    #[test]
    fn pid_reduces_error_over_open_loop() {
        let s = setup();
        let dist = DisturbanceSpec::default();
        let open = compute_metrics(&run_trial(&s, &mut ZeroController, &dist, 0).unwrap()).unwrap();
        let pid = compute_metrics(&pid_baseline(&s, PidGains::default(), &dist, 0).unwrap()).unwrap();
        assert!(pid.mean_abs_mm < open.mean_abs_mm);
    }
}
