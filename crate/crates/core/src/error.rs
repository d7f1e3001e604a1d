use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),
    #[error("empty request: {0}")]
    EmptyRequest(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("optimizer failed: {message} (best objective {best_objective})")]
    Optimizer { message: String, best_objective: f64 },
    #[error("bootstrap degenerate: {0}")]
    BootstrapDegenerate(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
