use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SfrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("pixel index ({row}, {col}) out of range for resolution {n}")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("joint count mismatch: expected {expected} joints, got {got}")]
    JointCountMismatch { expected: usize, got: usize },

    #[error("frame count mismatch: expected {expected} frames, got {got}")]
    FrameCountMismatch { expected: usize, got: usize },

    #[error("point ({u}, {v}) lies outside the pixel-center hull [{lo}, {hi}]")]
    OutOfHull { u: f64, v: f64, lo: f64, hi: f64 },

    #[error("degenerate heatmap: total mass is zero")]
    DegenerateHeatmap,

    #[error("unsupported joint: heatmap support has mass {mass:e} on the hand mask")]
    UnsupportedJoint { mass: f64 },

    #[error("empty hand: every pixel was removed")]
    EmptyHand,

    #[error("empty crop: no on-hand pixels inside the normalization cube")]
    EmptyCrop,

    #[error("resolution {m} is not divisible by {n}")]
    NotDivisible { m: usize, n: usize },

    #[error("total loss needs at least one stage")]
    NoStages,

    #[error("optimizer diverged at iteration {iteration}: loss {loss:e} (initial {initial:e})")]
    Divergence {
        iteration: usize,
        loss: f64,
        initial: f64,
    },

    #[error("invalid camera intrinsics: fx={fx}, fy={fy}")]
    InvalidIntrinsics { fx: f64, fy: f64 },

    #[error("rotated joint {joint} leaves the frame at ({u}, {v})")]
    RotatedOutOfFrame { joint: usize, u: f64, v: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SfrError>;
