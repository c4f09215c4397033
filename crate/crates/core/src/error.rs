use thiserror::Error;

/// Errors raised by the construction, verification and I/O layers.
///
/// Variants fall into three families that the CLI maps onto exit codes:
/// rejected inputs, checks that ran and failed, and numerical breakdowns.
#[derive(Debug, Error)]
pub enum JoyceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value {value} outside domain ({lo}, {hi})")]
    Domain { value: f64, lo: f64, hi: f64 },

    #[error("value {value} outside range ({lo}, {hi})")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("incompatible seed and weight: {0}")]
    Incompatible(String),

    #[error("degenerate seed pair: {0}")]
    Degenerate(String),

    #[error("1-form not closed: residual {residual:.3e} exceeds {tolerance:.3e} at node (i={i}, j={j})")]
    NotClosed {
        residual: f64,
        tolerance: f64,
        i: usize,
        j: usize,
    },

    #[error("not harmonic: {name} Laplacian {residual:.3e} exceeds {tolerance:.3e} at node (i={i}, j={j})")]
    NotHarmonic {
        name: String,
        residual: f64,
        tolerance: f64,
        i: usize,
        j: usize,
    },

    #[error("not convex at node (i={i}, j={j}): leading minor {minor:.3e}, determinant {det:.3e}")]
    NotConvex { i: usize, j: usize, minor: f64, det: f64 },

    #[error("not a solution: {0}")]
    NotASolution(String),

    #[error("no ordinary points: {0}")]
    NoOrdinaryPoints(String),

    #[error("singular Jacobian at node (i={i}, j={j})")]
    Singular { i: usize, j: usize },

    #[error("{count} target nodes outside the image, first at {first:?}")]
    OutsideImage { count: usize, first: (usize, usize) },

    #[error("fold-over: {0}")]
    FoldOver(String),

    #[error("Newton iteration failed to converge: {0}")]
    NewtonFailed(String),

    #[error("ODE integration failed: {0}")]
    OdeFailed(String),

    #[error("non-monotone: {0}")]
    NonMonotone(String),

    #[error("curvature changes sign: {0}")]
    CurvatureSign(String),

    #[error("tolerance check failed: {0}")]
    CheckFailed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// A check ran and failed tolerance (exit 1).
    CheckFailed,
    /// Invalid input or configuration (exit 2).
    Invalid,
    /// Internal numerical failure (exit 3).
    Numerical,
}

impl JoyceError {
    pub fn class(&self) -> ErrorClass {
        use JoyceError::*;
        match self {
            Degenerate(_)
            | NotClosed { .. }
            | NotHarmonic { .. }
            | NotASolution(_)
            | NoOrdinaryPoints(_)
            | CheckFailed(_)
            | FoldOver(_)
            | NotConvex { .. } => ErrorClass::CheckFailed,
            InvalidInput(_)
            | Domain { .. }
            | Range { .. }
            | GridMismatch(_)
            | Incompatible(_)
            | OutsideImage { .. }
            | NonMonotone(_)
            | CurvatureSign(_)
            | Config(_)
            | Io(_)
            | Json(_) => ErrorClass::Invalid,
            Singular { .. } | NewtonFailed(_) | OdeFailed(_) => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = JoyceError> = std::result::Result<T, E>;
