//! Experiment protocol: desired paths, trials, learning runs, disturbance
//! sweeps, the PID baseline, metrics and the low-pass test.

pub mod ilc;
pub mod lowpass;
pub mod metrics;
pub mod pid;
pub mod sweep;
pub mod trajectory;
pub mod trial;

pub use ilc::{probe_sensitivity, run_ilc, CommandMap, IlcAgent, IlcRun, KeptIteration, IterationRecord, LogPolicy};
pub use lowpass::{
    effective_time_constant, first_order_attenuation_db, lowpass_attenuation_test, LowpassReport, LowpassSpec, ToneResponse,
};
pub use metrics::{compute_metrics, error_stats, Metrics};
pub use pid::{pid_baseline, tune_pid, PidController, PidGains, PidGrid};
pub use sweep::{disturbance_sweep, non_decreasing, SweepRow, DEFAULT_FRACTIONS};
pub use trajectory::{generate_trajectory, reachable_joint_path, TrajectoryKind, TrajectorySpec};
pub use trial::{
    replay, run_trial, ActivationNoise, Controller, DisturbanceSpec, OpenLoop, Setup, TrialLog,
    ZeroController,
};
