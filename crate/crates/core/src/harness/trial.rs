use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, ArmState};
use crate::error::{Error, Result};
use crate::muscle::MuscleDiagnostics;

use super::trajectory::{generate_trajectory, reachable_joint_path, TrajectorySpec};

/// Seconds the arm settles under neutral commands before a trial.
pub const SETTLE_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// Tip load as a fraction of `rated_load`, in [0, 0.5].
    pub load_fraction: f64,
    /// kg
    pub rated_load: f64,
    /// RMS of the zero-mean noise added to every excitation.
    pub noise_amplitude: f64,
    /// Hz
    pub noise_band: [f64; 2],
    /// Sinusoids per muscle in the noise sum.
    pub noise_components: usize,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            load_fraction: 0.0,
            rated_load: 2.5,
            noise_amplitude: 0.0,
            noise_band: [0.5, 20.0],
            noise_components: 8,
        }
    }
}

fn invalid(field: &str, message: String) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        message,
    }
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.load_fraction) {
            return Err(invalid(
                "load_fraction",
                format!("must be in [0, 0.5], got {}", self.load_fraction),
            ));
        }
        if !(self.rated_load >= 0.0 && self.rated_load.is_finite()) {
            return Err(invalid("rated_load", format!("must be >= 0, got {}", self.rated_load)));
        }
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude <= 0.5) {
            return Err(invalid(
                "noise_amplitude",
                format!("must be in [0, 0.5], got {}", self.noise_amplitude),
            ));
        }
        let [lo, hi] = self.noise_band;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("noise_band", format!("must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        if self.noise_components == 0 {
            return Err(invalid("noise_components", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn load_mass(&self) -> f64 {
        self.load_fraction * self.rated_load
    }
}

/// Band-limited zero-mean excitation noise: a seeded sum of sinusoids with
/// random frequencies in the band and random phases, per muscle.
#[derive(Debug, Clone)]
pub struct ActivationNoise {
    /// (amplitude, angular frequency, phase) per component, per muscle.
    components: Vec<Vec<(f64, f64, f64)>>,
}

impl ActivationNoise {
    pub fn new(spec: &DisturbanceSpec, muscles: usize, seed: u64) -> Self {
        if spec.noise_amplitude == 0.0 {
            return Self {
                components: vec![Vec::new(); muscles],
            };
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = spec.noise_components;
        let amp = spec.noise_amplitude * (2.0 / k as f64).sqrt();
        let [lo, hi] = spec.noise_band;
        let components = (0..muscles)
            .map(|_| {
                (0..k)
                    .map(|_| {
                        let f = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                        (amp, 2.0 * PI * f, rng.gen_range(0.0..2.0 * PI))
                    })
                    .collect()
            })
            .collect();
        Self { components }
    }

    pub fn value(&self, muscle: usize, t: f64) -> f64 {
        self.components[muscle]
            .iter()
            .map(|(a, w, p)| a * (w * t + p).sin())
            .sum()
    }

    /// Add noise to excitations, keeping them inside (0, 1].
    pub fn apply(&self, excitations: &mut DVector<f64>, t: f64) {
        for (i, u) in excitations.iter_mut().enumerate() {
            if !self.components[i].is_empty() {
                *u = (*u + self.value(i, t)).clamp(crate::muscle::ACTIVATION_FLOOR, 1.0);
            }
        }
    }
}

/// Arm, desired path and start state shared by every trial of an
/// experiment.
#[derive(Debug, Clone)]
pub struct Setup {
    pub arm: ArmModel,
    pub dt: f64,
    pub y_d: Arc<Vec<DVector<f64>>>,
    pub muscle_lengths_desired: Arc<Vec<DVector<f64>>>,
    pub start: ArmState,
}

impl Setup {
    /// Settle the arm under neutral commands, lay the path from the
    /// settled tip (unless an offset is given) and check reachability.
    pub fn new(arm: ArmModel, spec: &TrajectorySpec, dt: f64) -> Result<Self> {
        arm.validate()?;
        let start = arm.settled_state(&arm.neutral_commands(), SETTLE_SECONDS, dt)?;
        let offset = match &spec.offset {
            Some(o) if o.len() == arm.task_dims => DVector::from_column_slice(o),
            Some(o) => {
                return Err(Error::Dimension(format!(
                    "trajectory offset has {} entries for {} task coordinates",
                    o.len(),
                    arm.task_dims
                )))
            }
            None => arm.forward_kinematics(&start.q),
        };
        let y_d = generate_trajectory(spec, dt, &offset)?;
        let q_d = reachable_joint_path(&arm, &y_d, &start.q)?;
        let l_d = q_d.iter().map(|q| arm.muscle_lengths(q)).collect();
        Ok(Self {
            arm,
            dt,
            y_d: Arc::new(y_d),
            muscle_lengths_desired: Arc::new(l_d),
            start,
        })
    }

    /// Same path with a different tip load; the start state is re-settled.
    pub fn with_load(&self, tip_mass: f64) -> Result<Self> {
        let mut arm = self.arm.clone();
        arm.tip_mass = tip_mass;
        let start = arm.settled_state(&arm.neutral_commands(), SETTLE_SECONDS, self.dt)?;
        Ok(Self {
            arm,
            start,
            ..self.clone()
        })
    }

    pub fn horizon(&self) -> usize {
        self.y_d.len()
    }
}

/// Anything that turns measurements into joint commands in [0, 1].
pub trait Controller {
    fn begin(&mut self) {}
    /// Joint commands for tick `t`, plus the raw controller output to log.
    fn command(
        &mut self,
        t: usize,
        y: &DVector<f64>,
        y_d: &[DVector<f64>],
        state: &ArmState,
    ) -> (Vec<f64>, DVector<f64>);
    fn finish(&mut self, _errors: Vec<DVector<f64>>) {}
}

/// Neutral commands throughout.
pub struct ZeroController;

impl Controller for ZeroController {
    fn command(&mut self, _: usize, y: &DVector<f64>, _: &[DVector<f64>], state: &ArmState) -> (Vec<f64>, DVector<f64>) {
        (vec![0.5; state.q.len()], DVector::zeros(y.len()))
    }
}

/// Plays back a recorded command sequence.
pub struct OpenLoop {
    pub commands: Vec<Vec<f64>>,
}

impl Controller for OpenLoop {
    fn command(&mut self, t: usize, _: &DVector<f64>, _: &[DVector<f64>], _: &ArmState) -> (Vec<f64>, DVector<f64>) {
        let c = self.commands[t.min(self.commands.len() - 1)].clone();
        let u = DVector::from_column_slice(&c);
        (c, u)
    }
}

/// Per-tick record of one trial.
#[derive(Debug, Clone)]
pub struct TrialLog {
    pub dt: f64,
    pub y_d: Arc<Vec<DVector<f64>>>,
    pub muscle_lengths_desired: Arc<Vec<DVector<f64>>>,
    pub y: Vec<DVector<f64>>,
    pub q: Vec<DVector<f64>>,
    pub qdot: Vec<DVector<f64>>,
    pub muscle_lengths: Vec<DVector<f64>>,
    /// Raw controller output per tick.
    pub u: Vec<DVector<f64>>,
    /// Joint commands per tick, before noise.
    pub commands: Vec<Vec<f64>>,
    /// Tendon forces produced by the step leaving each tick.
    pub forces: Vec<DVector<f64>>,
    /// Time of the failed step when integration diverged.
    pub diverged: Option<f64>,
    pub muscle_diagnostics: MuscleDiagnostics,
    pub limit_hits: u64,
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn time(&self, t: usize) -> f64 {
        t as f64 * self.dt
    }

    /// Tracking error `y_d - y` per recorded tick.
    pub fn errors(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.y.iter().zip(self.y_d.iter()).map(|(y, d)| d - y)
    }

    /// True when the trial ran to the end with finite outputs.
    pub fn completed(&self) -> bool {
        self.diverged.is_none()
            && self.len() == self.y_d.len()
            && self.y.iter().all(|y| y.iter().all(|v| v.is_finite()))
    }
}

/// Simulate one pass over the desired path.
pub fn run_trial(
    setup: &Setup,
    controller: &mut dyn Controller,
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> Result<TrialLog> {
    disturbance.validate()?;
    let loaded;
    let setup = if disturbance.load_mass() != setup.arm.tip_mass {
        loaded = setup.with_load(disturbance.load_mass())?;
        &loaded
    } else {
        setup
    };
    let arm = &setup.arm;
    let dt = setup.dt;
    let n = setup.horizon();
    let noise = ActivationNoise::new(disturbance, arm.n_muscles(), seed);
    let f_ext = DVector::zeros(arm.task_dims);

    let mut log = TrialLog {
        dt,
        y_d: setup.y_d.clone(),
        muscle_lengths_desired: setup.muscle_lengths_desired.clone(),
        y: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        qdot: Vec::with_capacity(n),
        muscle_lengths: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        commands: Vec::with_capacity(n),
        forces: Vec::with_capacity(n),
        diverged: None,
        muscle_diagnostics: MuscleDiagnostics::default(),
        limit_hits: 0,
    };

    controller.begin();
    let mut state = setup.start.clone();
    for t in 0..n {
        let y = arm.forward_kinematics(&state.q);
        let (commands, u) = controller.command(t, &y, &setup.y_d, &state);
        log.y.push(y);
        log.q.push(state.q.clone());
        log.qdot.push(state.qdot.clone());
        log.muscle_lengths.push(arm.muscle_lengths(&state.q));
        log.u.push(u);
        if t + 1 == n {
            log.commands.push(commands);
            break;
        }
        let mut excitations = arm.excitations_from_commands(&commands);
        log.commands.push(commands);
        noise.apply(&mut excitations, t as f64 * dt);
        match arm.integrate_step(&state, &excitations, &f_ext, dt) {
            Ok((next, diag)) => {
                log.forces.push(diag.forces);
                log.muscle_diagnostics += diag.muscle;
                log.limit_hits += diag.hit_limit as u64;
                state = next;
            }
            Err(Error::Diverged { time, .. }) => {
                log.diverged = Some(time);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    controller.finish(log.errors().collect());
    Ok(log)
}

/// Open-loop playback of a recorded command sequence.
pub fn replay(
    setup: &Setup,
    commands: &[Vec<f64>],
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> Result<TrialLog> {
    if commands.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut ctl = OpenLoop {
        commands: commands.to_vec(),
    };
    run_trial(setup, &mut ctl, disturbance, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::preset;

    fn short_setup() -> Setup {
        let spec = TrajectorySpec {
            duration: 2.0,
            ..TrajectorySpec::default()
        };
        Setup::new(preset("planar2x4").unwrap(), &spec, 1e-3).unwrap()
    }

    #[test]
    fn zero_controller_error_is_path_excursion() {
        let setup = short_setup();
        let log = run_trial(&setup, &mut ZeroController, &DisturbanceSpec::default(), 0).unwrap();
        assert!(log.completed());
        let y0 = &setup.y_d[0];
        for (t, e) in log.errors().enumerate() {
            let excursion = &setup.y_d[t] - y0;
            assert!((e - excursion).norm() < 1e-6, "tick {t}");
        }
    }

    #[test]
    fn same_seed_same_log() {
        let setup = short_setup();
        let dist = DisturbanceSpec {
            noise_amplitude: 0.05,
            ..DisturbanceSpec::default()
        };
        let a = run_trial(&setup, &mut ZeroController, &dist, 3).unwrap();
        let b = run_trial(&setup, &mut ZeroController, &dist, 3).unwrap();
        let c = run_trial(&setup, &mut ZeroController, &dist, 4).unwrap();
        assert_eq!(a.y, b.y);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn noise_is_zero_mean_with_requested_rms() {
        let dist = DisturbanceSpec {
            noise_amplitude: 0.1,
            noise_band: [2.0, 20.0],
            ..DisturbanceSpec::default()
        };
        let noise = ActivationNoise::new(&dist, 1, 1);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|i| noise.value(0, i as f64 * 1e-3)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let rms = (samples.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 0.005);
        assert!((rms - 0.1).abs() < 0.01, "rms {rms}");
    }

    #[test]
    fn load_fraction_bounds() {
        let bad = DisturbanceSpec {
            load_fraction: 0.6,
            ..DisturbanceSpec::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(
            DisturbanceSpec {
                load_fraction: 0.2,
                ..DisturbanceSpec::default()
            }
            .load_mass(),
            0.5
        );
    }
}
