use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, ArmState};
use crate::ddilc::{Ddilc, DdilcParams};
use crate::error::Result;

use super::metrics::{compute_metrics, Metrics};
use super::trial::{run_trial, Controller, DisturbanceSpec, Setup, TrialLog};

/// Command perturbation used by the sensitivity probe.
pub const PROBE_STEP: f64 = 0.05;
/// Settling time per probe posture, s.
pub const PROBE_SETTLE: f64 = 5.0;

/// Static tip sensitivity to joint commands (task x joints), by central
/// differences between settled postures.
pub fn probe_sensitivity(arm: &ArmModel, dt: f64) -> Result<DMatrix<f64>> {
    let n = arm.n_joints();
    let neutral = arm.neutral_commands();
    let mut g = DMatrix::zeros(arm.task_dims, n);
    for j in 0..n {
        let mut plus = neutral.clone();
        let mut minus = neutral.clone();
        plus[j] += PROBE_STEP;
        minus[j] -= PROBE_STEP;
        let yp = arm.forward_kinematics(&arm.settled_state(&plus, PROBE_SETTLE, dt)?.q);
        let ym = arm.forward_kinematics(&arm.settled_state(&minus, PROBE_SETTLE, dt)?.q);
        g.set_column(j, &((yp - ym) / (2.0 * PROBE_STEP)));
    }
    Ok(g)
}

/// Maps the controller's task-space output to joint commands through the
/// pseudo-inverse of the probed sensitivity, so a unit output change moves
/// the tip by roughly `output_scale` along the matching task axis.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandMap {
    pub neutral: Vec<f64>,
    pub decouple: DMatrix<f64>,
}

impl CommandMap {
    pub fn from_sensitivity(neutral: Vec<f64>, g: &DMatrix<f64>, output_scale: f64) -> Self {
        let (pinv, _) = crate::arm::pseudo_inverse(g);
        Self {
            neutral,
            decouple: pinv * output_scale,
        }
    }

    /// Joint commands for output `u`; `u = 0.5` gives the neutral commands.
    pub fn commands(&self, u: &DVector<f64>) -> Vec<f64> {
        let centered = u.add_scalar(-0.5);
        let delta = &self.decouple * centered;
        self.neutral
            .iter()
            .zip(delta.iter())
            .map(|(c, d)| (c + d).clamp(0.0, 1.0))
            .collect()
    }
}

/// Learning controller plus command mapping, usable as a trial controller.
pub struct IlcAgent {
    pub ddilc: Ddilc,
    pub map: CommandMap,
}

impl IlcAgent {
    pub fn new(setup: &Setup, params: &DdilcParams, seed: u64) -> Result<Self> {
        let g = probe_sensitivity(&setup.arm, setup.dt)?;
        Self::with_sensitivity(setup, params, &g, seed)
    }

    pub fn with_sensitivity(
        setup: &Setup,
        params: &DdilcParams,
        g: &DMatrix<f64>,
        seed: u64,
    ) -> Result<Self> {
        let m = setup.arm.task_dims;
        let map = CommandMap::from_sensitivity(setup.arm.neutral_commands(), g, params.output_scale);
        let phi_init = DMatrix::identity(m, m) * params.output_scale;
        let ddilc = Ddilc::new(
            params.clone(),
            phi_init,
            DVector::from_element(m, 0.5),
            setup.horizon(),
            seed,
        )?;
        Ok(Self { ddilc, map })
    }
}

impl Controller for IlcAgent {
    fn begin(&mut self) {
        self.ddilc.begin_iteration();
    }

    fn command(
        &mut self,
        t: usize,
        y: &DVector<f64>,
        y_d: &[DVector<f64>],
        _: &ArmState,
    ) -> (Vec<f64>, DVector<f64>) {
        let u = self.ddilc.control(t, y, y_d);
        (self.map.commands(&u), u)
    }

    fn finish(&mut self, errors: Vec<DVector<f64>>) {
        self.ddilc.end_iteration(errors);
    }
}

/// Which iterations keep their full per-tick log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogPolicy {
    None,
    #[default]
    Ends,
    All,
}

impl LogPolicy {
    pub fn keeps(self, k: usize, iterations: usize) -> bool {
        match self {
            LogPolicy::None => false,
            LogPolicy::Ends => k == 1 || k == iterations,
            LogPolicy::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub metrics: Metrics,
    pub diverged: bool,
    pub pjm_resets: usize,
    /// Learning gain relative to its initial value.
    pub beta_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    /// Iteration after which the event fired.
    pub iteration: usize,
    pub beta_scale: f64,
    /// Iteration whose feedforward was restored.
    pub restored_from: usize,
}

/// Estimator, gains and feedforward at the end of an iteration.
#[derive(Debug, Clone)]
pub struct LearningSnapshot {
    pub phi_hat: DMatrix<f64>,
    pub xi_hat: DMatrix<f64>,
    pub u_ff: Vec<DVector<f64>>,
}

/// Kept per-tick data of one iteration.
#[derive(Debug, Clone)]
pub struct KeptIteration {
    pub iteration: usize,
    pub log: TrialLog,
    pub learning: LearningSnapshot,
}

#[derive(Debug, Clone)]
pub struct IlcRun {
    pub records: Vec<IterationRecord>,
    pub events: Vec<MonitorEvent>,
    pub kept: Vec<KeptIteration>,
    pub sensitivity: DMatrix<f64>,
    /// Joint commands applied in the final iteration.
    pub final_commands: Vec<Vec<f64>>,
}

impl IlcRun {
    pub fn error_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.metrics.mean_abs_mm).collect()
    }

    pub fn final_metrics(&self) -> Metrics {
        self.records.last().map(|r| r.metrics).unwrap_or_default()
    }
}

/// Per-iteration noise seed, distinct from the controller seed.
pub fn iteration_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64 + 1)
}

/// Repeated trials with the feedforward learned between them. When the mean
/// error grows three iterations in a row the learning gain is halved and the
/// feedforward restarts from the best iteration so far.
pub fn run_ilc(
    setup: &Setup,
    params: &DdilcParams,
    disturbance: &DisturbanceSpec,
    iterations: usize,
    seed: u64,
    policy: LogPolicy,
) -> Result<IlcRun> {
    let g = probe_sensitivity(&setup.arm, setup.dt)?;
    let mut agent = IlcAgent::with_sensitivity(setup, params, &g, seed)?;
    let mut records = Vec::with_capacity(iterations);
    let mut events = Vec::new();
    let mut kept = Vec::new();
    let mut final_commands = Vec::new();
    let mut best: Option<(usize, f64, Vec<DVector<f64>>)> = None;
    let mut beta_scale = 1.0;
    let mut growth = 0usize;

    for k in 1..=iterations {
        let log = run_trial(setup, &mut agent, disturbance, iteration_seed(seed, k))?;
        let diverged = !log.completed();
        let mut metrics = compute_metrics(&log)?;
        if diverged {
            metrics.mean_abs_mm = f64::INFINITY;
        }
        records.push(IterationRecord {
            iteration: k,
            metrics,
            diverged,
            pjm_resets: agent.ddilc.pjm_resets(),
            beta_scale,
        });

        let err = metrics.mean_abs_mm;
        if best.as_ref().map_or(true, |(_, e, _)| err < *e) {
            best = Some((k, err, agent.ddilc.memory.u_ff.clone()));
        }
        if k > 1 && err > records[k - 2].metrics.mean_abs_mm {
            growth += 1;
        } else {
            growth = 0;
        }

        if policy.keeps(k, iterations) {
            kept.push(KeptIteration {
                iteration: k,
                learning: LearningSnapshot {
                    phi_hat: agent.ddilc.pjm.phi_hat.clone(),
                    xi_hat: agent.ddilc.memory.xi_hat.clone(),
                    u_ff: agent.ddilc.memory.u_ff.clone(),
                },
                log: log.clone(),
            });
        }
        if k == iterations {
            final_commands = log.commands;
        }

        if growth >= 3 && k < iterations {
            let (best_k, _, u_ff) = best.clone().expect("best iteration recorded");
            agent.ddilc.halve_beta();
            agent.ddilc.restart_feedforward(u_ff);
            beta_scale *= 0.5;
            growth = 0;
            events.push(MonitorEvent {
                iteration: k,
                beta_scale,
                restored_from: best_k,
            });
        }
    }
    Ok(IlcRun {
        records,
        events,
        kept,
        sensitivity: g,
        final_commands,
    })
}
