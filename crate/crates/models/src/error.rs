use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Ad(#[from] autodiff::AdError),
    #[error(transparent)]
    Field(#[from] field::FieldError),
    #[error("geometry: {0}")]
    Geometry(String),
}

impl From<geometry::GeoError> for ModelError {
    fn from(e: geometry::GeoError) -> Self {
        ModelError::Geometry(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
