use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error(transparent)]
    Model(#[from] atkd_model::ModelError),
    #[error(transparent)]
    Core(#[from] atkd_core::Error),
}

impl EngineError {
    /// Numerical or domain failure, as opposed to a bad request.
    pub fn is_numerical(&self) -> bool {
        match self {
            EngineError::Diverged { .. } => true,
            EngineError::Core(e) => e.is_numerical(),
            EngineError::Model(atkd_model::ModelError::Core(e)) => e.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;
