use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, GeoError>;
