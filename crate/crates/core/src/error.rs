use crate::geom::Cell;

/// Errors produced anywhere in the mapping lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("scene generation failed for seed {seed}: {reason}")]
    Generation { seed: u64, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("cell ({}, {}) is not on the navigation grid", .0.x, .0.z)]
    OffNavgrid(Cell),

    #[error("need at least two navigable cells, found {0}")]
    TooFewCells(usize),

    #[error("ground-truth surfel set is empty")]
    EmptyGroundTruth,

    #[error("series is empty")]
    EmptySeries,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("start cell ({}, {}) is blocked", .0.x, .0.z)]
    StartBlocked(Cell),

    #[error("cell ({}, {}) lies outside the planning window", .0.x, .0.z)]
    OutsideWindow(Cell),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
