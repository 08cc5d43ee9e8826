use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("bad hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label {0} is not binary")]
    Label(u8),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] studentgraph_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
