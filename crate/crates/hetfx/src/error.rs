use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum HetfxError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("design matrix is rank deficient at column {0}")]
    RankDeficient(usize),

    #[error("treatment value {found} is outside 0..={max}")]
    OutOfRangeCategory { found: usize, max: usize },

    #[error("covariate cell {0} is empty")]
    EmptyCell(usize),

    #[error("covariates look continuous (every observation is its own cell); the cell-based path needs discrete covariates")]
    ContinuousCovariate,

    #[error("averaged conditional covariance matrix is numerically singular (det = {det:.3e})")]
    SingularCovariance { det: f64 },

    #[error("treatment category {0} never observed")]
    MissingCategory(usize),

    #[error("optimizer did not converge after {iterations} iterations (mean gradient norm {grad_norm:.3e})")]
    Nonconvergence { iterations: usize, grad_norm: f64 },

    #[error("separation suspected: fitted probability of an observed category fell below 1e-12")]
    SeparationSuspected,

    #[error("category {0} is not a valid treatment level here")]
    BadCategory(usize),

    #[error("degenerate denominator: P0 + Pd below tolerance at observation {0}")]
    DegenerateDenominator(usize),

    #[error("subsample for target category {d} lacks observations with D = {missing}")]
    EmptySubsampleSide { d: usize, missing: usize },

    #[error("degenerate propensity-score residuals: zero sum of squares on the subsample")]
    DegeneratePsr,

    #[error("score outer-product matrix is singular")]
    SingularScoreOuterProduct,

    #[error("invalid simulation specification: {0}")]
    InvalidSpecCombination(String),

    #[error("{failed} of {total} Monte Carlo repetitions failed (limit is 2%)")]
    ExcessRepFailures { failed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HetfxError {
    /// Process exit code: 2 for input/validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        use HetfxError::*;
        match self {
            DimensionMismatch(_) | InvalidData(_) | OutOfRangeCategory { .. } | EmptyCell(_)
            | ContinuousCovariate | MissingCategory(_) | BadCategory(_)
            | EmptySubsampleSide { .. } | InvalidSpecCombination(_) | InvalidConfig(_)
            | Csv(_) | Io(_) | Json(_) => 2,
            RankDeficient(_) | SingularCovariance { .. } | Nonconvergence { .. }
            | SeparationSuspected | DegenerateDenominator(_) | DegeneratePsr
            | SingularScoreOuterProduct | ExcessRepFailures { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HetfxError>;
