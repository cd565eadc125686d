use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model evaluation failed at t = {t}: {message}")]
    ModelEvaluation { t: f64, message: String },

    #[error("integration failed at t = {t}: step size underflow (h = {step:e})")]
    IntegrationFailure {
        t: f64,
        step: f64,
        last_state: Vec<f64>,
    },

    #[error("time {t} outside primitive domain [{start}, {end}]")]
    Domain { t: f64, start: f64, end: f64 },

    #[error("invalid duration {0}: must be positive")]
    InvalidDuration(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("primitive `{name}` failed validation: {reason}")]
    InvalidPrimitive { name: String, reason: String },

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("goal `{goal}` unreachable from `{start}` (reachable: {reachable:?}; goal component: {goal_component:?})")]
    Unreachable {
        start: String,
        goal: String,
        reachable: Vec<String>,
        goal_component: Vec<String>,
    },

    #[error("unknown export format `{0}`")]
    UnknownFormat(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid_primitive(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidPrimitive {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
