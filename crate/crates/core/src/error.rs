use thiserror::Error;

use crate::geometry::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The linearized interface cannot represent the exact one on this mesh.
    #[error("interface not resolved by element {element}: {reason}; refine the mesh")]
    ResolveInterface { element: usize, reason: String },

    #[error(
        "element {element} on side {side:?} has no face path to a large element (delta too large)"
    )]
    UnreachableElement { side: Side, element: usize },

    #[error("invalid element: {0}")]
    InvalidElement(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix dimension {dim} exceeds dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("invalid preconditioner: {0}")]
    InvalidPreconditioner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_geometry(&self) -> bool {
        matches!(
            self,
            Error::ResolveInterface { .. }
                | Error::UnreachableElement { .. }
                | Error::InvalidElement(_)
        )
    }

    pub fn is_solver(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::TooLarge { .. } | Error::InvalidPreconditioner(_)
        )
    }
}
