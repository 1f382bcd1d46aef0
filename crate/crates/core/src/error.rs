use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is singular (pivot {pivot:.3e} below threshold)")]
    SingularMatrix { pivot: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter {rho:?} lies outside the parameter box")]
    ParamOutOfRange { rho: Vec<f64> },

    #[error("closed-loop matrix is not Hurwitz")]
    NotHurwitz,

    #[error("no stabilizing initial gain found")]
    NoStabilizingInit,

    #[error("iteration did not converge after {iterations} steps")]
    NotConverged { iterations: usize },

    #[error("point lies outside the constraint box (min g = {min_g:.3e})")]
    OutsideManifold { min_g: f64 },

    #[error("zero pivot in Routh table at row {row}")]
    ZeroPivot { row: usize },

    #[error("symbolic construction limited to n <= {max}, got n = {n}")]
    DegreeGuard { n: usize, max: usize },

    #[error("input matrix {index} is not Hurwitz")]
    NotHurwitzInput { index: usize },

    #[error("CARE failed at rho = {rho:?}: {reason}")]
    CareFailure { rho: Vec<f64>, reason: String },

    #[error("gain left the box by {drift:.3e}, beyond the clamp threshold")]
    DriftTooLarge { drift: f64 },

    #[error("traces describe different scenarios: {0}")]
    MismatchedScenarios(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
