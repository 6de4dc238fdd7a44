use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A model, graph, or placement file failed structural or semantic checks.
    #[error("validation error: {0}")]
    Validation(String),

    /// The requested partition/placement cannot exist (e.g. fewer cores than layers).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A graph node has no coordinate in the placement.
    #[error("node {0} is not placed")]
    UnplacedNode(usize),

    /// More logical nodes than physical cores.
    #[error("mesh too small: {nodes} nodes > {cells} cells")]
    MeshTooSmall { nodes: usize, cells: usize },

    /// A numeric quantity became NaN or infinite during optimization.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Internal invariant violation; indicates a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: parse error: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
