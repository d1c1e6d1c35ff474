use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("search direction is not a descent direction (Re<d,g> = {0:e})")]
    NotDescent(f64),

    #[error("line search failed after {evaluations} evaluations")]
    LineSearch { evaluations: usize },

    #[error("dense Hessian assembly limited to {limit} pixels, got {requested}")]
    TooLarge { requested: usize, limit: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
