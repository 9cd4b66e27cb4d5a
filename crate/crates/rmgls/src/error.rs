//! Error type shared by all library modules.

/// Errors produced by factored-matrix algebra, manifold geometry, grid
/// transfer, line search, and the multilevel solver.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Every singular value of the input fell at or below the numerical
    /// floor, so no positive-rank factorization exists.
    #[error("rank collapsed to zero during recompression (largest singular value {sigma_max:.3e})")]
    RankCollapse { sigma_max: f64 },

    /// Operands do not have compatible shapes.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// A tangent vector was used at a base point other than the one it was
    /// constructed at. Tangent components are only meaningful relative to
    /// their own base factors, so this is always a caller bug.
    #[error("tangent vector base point does not match the point passed to {context}")]
    BaseMismatch { context: &'static str },

    /// The core factor of the orthographic retraction (Sigma + M) is
    /// numerically singular, so the retracted point would leave the
    /// fixed-rank manifold.
    #[error(
        "orthographic retraction leaves the fixed-rank manifold: core factor is numerically \
         singular (sigma_min {sigma_min:.3e}, sigma_max {sigma_max:.3e})"
    )]
    RetractionDomain { sigma_min: f64, sigma_max: f64 },

    /// A dense n x n materialization was requested above the safety cap.
    #[error("dense materialization of a {rows}x{cols} matrix exceeds the cap of {cap}x{cap}")]
    DenseCap { rows: usize, cols: usize, cap: usize },

    /// A line search was started along a direction with nonnegative slope.
    #[error("search direction is not a descent direction (initial slope {slope:.3e} >= 0)")]
    NotDescent { slope: f64 },

    /// The bracketing phase of a line search expanded its trial step without
    /// ever observing a nonnegative slope or a function increase: the
    /// objective appears unbounded below along this ray.
    #[error("line search found no bracket: objective still decreasing at step {t:.3e}")]
    StepUnbounded { t: f64 },

    /// A line search could not produce any usable step (for example, every
    /// trial evaluation left the retraction domain).
    #[error("line search failed: {0}")]
    LineSearchFailed(String),

    /// Factor matrices failed an orthonormality or positivity invariant.
    #[error("invalid factored matrix: {0}")]
    InvalidFactors(String),

    /// A configuration value is outside its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The dense reference solver did not reach its residual target.
    #[error("dense reference solve failed to converge: {0}")]
    OracleDiverged(String),
}

/// Convenience alias used throughout the library.
pub type Result<T> = std::result::Result<T, Error>;
