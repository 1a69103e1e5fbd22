//! Experiment configuration: a sectioned TOML file, every key optional.
//!
//! ```toml
//! [arm]
//! preset = "planar2x4"
//!
//! [muscle]
//! t_act = 0.01
//!
//! [controller]
//! eta = 0.5
//!
//! [run]
//! iterations = 50
//! seed = 0
//! ```
//!
//! Environment variables `MYOARM_<SECTION>__<KEY>` override file values,
//! e.g. `MYOARM_RUN__ITERATIONS=10` or `MYOARM_PID__GAINS__KP=200`.

use serde::{Deserialize, Serialize};

use crate::arm::{preset_with_muscle, ArmModel, PRESET_NAMES};
use crate::ddilc::DdilcParams;
use crate::error::{Error, Result};
use crate::harness::{
    DisturbanceSpec, LogPolicy, LowpassSpec, PidGains, PidGrid, Setup, TrajectorySpec, DEFAULT_FRACTIONS,
};
use crate::muscle::MuscleParams;

pub const ENV_PREFIX: &str = "MYOARM_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSection {
    pub preset: String,
    /// Point mass at the tip, kg, on top of any disturbance load.
    pub tip_mass: f64,
}

impl Default for ArmSection {
    fn default() -> Self {
        Self {
            preset: "planar2x4".into(),
            tip_mass: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidSection {
    /// Grid-search the gains before comparing; otherwise use `gains`.
    pub tune: bool,
    pub gains: PidGains,
    pub grid: PidGrid,
}

impl Default for PidSection {
    fn default() -> Self {
        Self {
            tune: true,
            gains: PidGains::default(),
            grid: PidGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub iterations: usize,
    /// Repetitions per sweep condition when noise is on.
    pub repetitions: usize,
    pub seed: u64,
    /// Integration step, s.
    pub dt: f64,
    pub out: String,
    pub log_iterations: LogPolicy,
    pub fractions: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            iterations: 50,
            repetitions: 10,
            seed: 0,
            dt: 1e-3,
            out: "runs".into(),
            log_iterations: LogPolicy::Ends,
            fractions: DEFAULT_FRACTIONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arm: ArmSection,
    pub muscle: MuscleParams,
    pub controller: DdilcParams,
    pub trajectory: TrajectorySpec,
    pub disturbance: DisturbanceSpec,
    pub pid: PidSection,
    pub lowpass: LowpassSpec,
    pub run: RunSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    }
}

fn in_section(section: &str, e: Error) -> Error {
    match e {
        Error::ConfigInvalid { field, message } => Error::ConfigInvalid {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

/// Parse and validate a config file. Missing keys take their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `text`, then apply `MYOARM_SECTION__KEY=value` overrides from
/// `vars`. Values are read as TOML literals, falling back to strings.
pub fn parse_config_with_env<I>(text: &str, vars: I) -> Result<ExperimentConfig>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut overrides: Vec<(Vec<String>, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let path: Vec<String> = rest.split("__").map(str::to_lowercase).collect();
            (path.len() >= 2 && path.iter().all(|p| !p.is_empty())).then_some((path, v))
        })
        .collect();
    if overrides.is_empty() {
        return parse_config(text);
    }
    // Check the file alone first so its errors keep their line numbers.
    toml::from_str::<ExperimentConfig>(text).map_err(|e| parse_error(text, e))?;
    overrides.sort();
    let mut table: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
    for (path, raw) in overrides {
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(toml::Value::String(raw));
        let mut node = &mut table;
        for key in &path[..path.len() - 1] {
            let entry = node
                .entry(key.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| Error::ConfigInvalid {
                field: path.join("."),
                message: format!("'{key}' is not a section"),
            })?;
        }
        node.insert(path[path.len() - 1].clone(), value);
    }
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::ConfigParse {
        line: 0,
        message: format!("environment override: {}", e.message().trim()),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !PRESET_NAMES.contains(&self.arm.preset.as_str()) {
            return Err(Error::UnknownPreset(self.arm.preset.clone()));
        }
        if !(self.arm.tip_mass >= 0.0 && self.arm.tip_mass.is_finite()) {
            return Err(Error::ConfigInvalid {
                field: "arm.tip_mass".into(),
                message: format!("must be >= 0, got {}", self.arm.tip_mass),
            });
        }
        self.muscle.validate().map_err(|e| in_section("muscle", e))?;
        let arm = self.arm()?;
        self.controller
            .validate(arm.task_dims)
            .map_err(|e| in_section("controller", e))?;
        self.trajectory.validate().map_err(|e| in_section("trajectory", e))?;
        self.disturbance.validate().map_err(|e| in_section("disturbance", e))?;
        self.pid.gains.validate().map_err(|e| in_section("pid.gains", e))?;
        let grid = &self.pid.grid;
        if grid.kp.is_empty() || grid.ki_ratio.is_empty() || grid.kd_ratio.is_empty() {
            return Err(Error::ConfigInvalid {
                field: "pid.grid".into(),
                message: "every axis needs at least one value".into(),
            });
        }
        self.lowpass.validate().map_err(|e| in_section("lowpass", e))?;
        let run = &self.run;
        let bad = |field: &str, message: String| {
            Err(Error::ConfigInvalid {
                field: format!("run.{field}"),
                message,
            })
        };
        if run.iterations == 0 {
            return bad("iterations", "must be >= 1".into());
        }
        if run.seed > i64::MAX as u64 {
            return bad("seed", format!("must fit a TOML integer (<= {}), got {}", i64::MAX, run.seed));
        }
        if run.repetitions == 0 {
            return bad("repetitions", "must be >= 1".into());
        }
        if !(run.dt > 0.0 && run.dt <= 0.01) {
            return bad("dt", format!("must be in (0, 0.01], got {}", run.dt));
        }
        if run.out.is_empty() {
            return bad("out", "must not be empty".into());
        }
        if run.fractions.is_empty() {
            return bad("fractions", "must list at least one load fraction".into());
        }
        if let Some(f) = run.fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
            return bad("fractions", format!("must be in [0, 0.5], got {f}"));
        }
        Ok(())
    }

    /// The arm preset with the configured muscle template and tip mass.
    pub fn arm(&self) -> Result<ArmModel> {
        let mut arm = preset_with_muscle(&self.arm.preset, &self.muscle)?;
        arm.tip_mass += self.arm.tip_mass;
        Ok(arm)
    }

    /// Trajectory and start state for the configured arm.
    pub fn setup(&self) -> Result<Setup> {
        Setup::new(self.arm()?, &self.trajectory, self.run.dt)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}
