use crate::field::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: Shape, found: Shape },

    #[error("non-finite value at pixel {index} ({context})")]
    NonFinite { index: usize, context: &'static str },

    #[error("invalid intensity data: {0}")]
    InvalidData(String),

    #[error("invalid support mask: {0}")]
    InvalidSupport(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("support fraction {fraction:.4} too large: oversampling requires at most 0.25")]
    Oversampling { fraction: f64 },

    #[error("iterate became non-finite at iteration {iteration} (pixel {index})")]
    Diverged { iteration: usize, index: usize },

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error(transparent)]
    Container(#[from] crate::container::ContainerError),
}
