use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;
