use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside the domain of a formula (negative rate, t <= 0 for kappa, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid configuration; `key` names the offending configuration key.
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integration blow-up for particle {particle} at step {step}: |X| = {norm:e}")]
    BlowUp {
        particle: usize,
        step: usize,
        norm: f64,
    },

    #[error("model `{0}` does not declare a separable interaction")]
    NotSeparable(String),

    #[error("coupling mismatch: {0}")]
    Coupling(String),

    #[error("insufficient replicas: {0}")]
    Replicas(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
