use thiserror::Error;

/// Errors raised by the core numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid needs at least 2 cells, got {0}")]
    TooFewCells(usize),

    #[error("grid mismatch: {left} cells vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("field contains a non-finite value at cell {0}")]
    NonFinite(usize),

    #[error("weight must be positive, found {value} at cell {cell}")]
    NonPositiveWeight { cell: usize, value: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("equilibrium bracket [{lo}, {hi}] does not contain a root")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("argument {0} outside [0, 1]")]
    OutOfUnitInterval(f64),

    #[error("solver breakdown at t = {t}: {reason}")]
    SolverBreakdown { t: f64, reason: String },

    #[error("decay fit window too short: {usable} usable rows, need at least {needed}")]
    WindowTooShort { usable: usize, needed: usize },

    #[error("infeasible sampling configuration: {0}")]
    Infeasible(String),

    #[error("constraint residual {residual:e} exceeds {tolerance:e}")]
    ConstraintResidual { residual: f64, tolerance: f64 },

    #[error("state touches the boundary of the admissible set at cell {0}")]
    BoundaryState(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
