use thiserror::Error;

/// Errors raised by model construction, evaluation and simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("node index {index} out of range for a graph with {nodes} nodes")]
    NodeIndex { index: usize, nodes: usize },

    #[error("switching schedule exhausted at t = {t} (schedule ends at {end})")]
    ScheduleExhausted { t: f64, end: f64 },

    #[error("invalid value for {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("plant model '{model}' does not support {capability}")]
    Capability { model: String, capability: &'static str },

    #[error("non-finite input to {context}")]
    NonFinite { context: &'static str },

    #[error("simulation diverged at t = {t}: non-finite {component}")]
    Diverged { t: f64, component: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
