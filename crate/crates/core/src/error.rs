use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("logistic fit did not converge after {iterations} iterations (last max |step| = {last_step:e})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        /// max |Δβ| per iteration
        trace: Vec<f64>,
    },

    #[error("perfect separation detected at iteration {iteration}: max |beta| = {max_coef:e}")]
    Separation { iteration: usize, max_coef: f64 },

    #[error("non-finite gradient in parameter `{tensor}` at index {index}")]
    NonFiniteGradient { tensor: String, index: usize },

    #[error("unknown feature `{name}`; valid names: {valid}")]
    UnknownFeature { name: String, valid: String },

    #[error("repeat {repeat} (seed {seed}) failed: {source}")]
    Repeat {
        repeat: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("cannot access {}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
