use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{solver} did not converge after {newton_steps} Newton steps (residual gap {residual:e})")]
    NonConvergence {
        solver: &'static str,
        newton_steps: usize,
        residual: f64,
    },

    #[error("target gain {target} is unreachable; the attack reaches at most {max_gain}")]
    InfeasibleGain { target: f64, max_gain: f64 },

    #[error("experiment `{label}` lacks {}", missing.join(", "))]
    MissingObservables {
        label: String,
        missing: Vec<&'static str>,
    },

    #[error("unknown monitored sequence `{0}` (expected d, 01, 0d, d1 or dd)")]
    UnknownSequence(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter { name, value, reason }
    }
}
