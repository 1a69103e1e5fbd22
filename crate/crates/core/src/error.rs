use thiserror::Error;

/// Errors produced anywhere in the simulator, controller or harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("force-velocity target {0} outside the open interval (0, 1.6)")]
    OutOfRange(f64),

    #[error("degenerate fiber equilibrium: activation * fl = {0:e} below floor")]
    DegenerateEquilibrium(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("negative tendon force {force} N on muscle {muscle}")]
    NegativeForce { muscle: usize, force: f64 },

    #[error("mass matrix is not positive definite (min pivot {0:e})")]
    IllConditioned(f64),

    #[error("integration diverged at t = {time} s")]
    Diverged {
        time: f64,
        last_good: Box<crate::arm::ArmState>,
    },

    #[error("trajectory sample {index} at {point:?} is unreachable")]
    Unreachable { index: usize, point: Vec<f64> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty log")]
    EmptyLog,

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::OutOfRange(_) => "out_of_range",
            Error::DegenerateEquilibrium(_) => "degenerate_equilibrium",
            Error::InvalidModel(_) => "invalid_model",
            Error::NegativeForce { .. } => "negative_force",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::Diverged { .. } => "diverged",
            Error::Unreachable { .. } => "unreachable",
            Error::Dimension(_) => "dimension",
            Error::EmptyLog => "empty_log",
            Error::ConfigParse { .. } => "config_parse",
            Error::ConfigInvalid { .. } => "config_invalid",
            Error::UnknownPreset(_) => "unknown_preset",
            Error::Io { .. } => "io",
            Error::Serialize(_) => "serialize",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
