use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] studentgraph_core::Error),
    #[error(transparent)]
    Baselines(#[from] studentgraph_baselines::Error),
    #[error(transparent)]
    Gnn(#[from] studentgraph_gnn::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no results to report")]
    NoResults,
    #[error("every grid point failed: {0}")]
    GridExhausted(String),
}

pub type Result<T> = std::result::Result<T, Error>;
