use thiserror::Error;

pub type Result<T, E = MetaError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetaError {
    #[error("dataset contains no studies")]
    EmptyDataset,
    #[error("study `{label}` has non-positive variance {var}")]
    NonPositiveVariance { label: String, var: f64 },
    #[error("study `{label}` has a non-finite effect size")]
    NonFiniteEffect { label: String },
    #[error("duplicate study label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid interval bounds: low {low} must be below high {high}")]
    InvalidBounds { low: f64, high: f64 },
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("ratio measure {value} must be strictly positive on the log scale")]
    NonPositiveRatio { value: f64 },
    #[error("pooling needs at least 2 studies, got {k}")]
    TooFewStudies { k: usize },
    #[error("positivity condition fails for study index {index} (margin {margin})")]
    AssumptionViolated { index: usize, margin: f64 },
    #[error("optimal weights lie on the simplex boundary; decomposition is defined for interior solutions only")]
    NonInteriorSolution,
    #[error("linear system is singular")]
    SingularMatrix,
    #[error("QP solver stopped after {iterations} iterations with KKT residual {residual:e}")]
    SolverDiverged { iterations: usize, residual: f64 },
    #[error("invalid weight problem: {0}")]
    InvalidProblem(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid grid axis: {0}")]
    InvalidAxis(String),
}
