use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {mu:?} lies outside the domain of problem `{problem}`")]
    DomainViolation { problem: String, mu: Vec<f64> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown problem `{id}` (registered: {})", known.join(", "))]
    UnknownProblem { id: String, known: Vec<String> },

    #[error("sparse solve failed: {reason} (relative residual {residual:e})")]
    SolverFailure { reason: String, residual: f64 },

    #[error("iteration did not converge in {iterations} steps; step history {history:?}")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("sweep failed at {} parameter point(s): {offenders:?}", offenders.len())]
    SweepFailure { offenders: Vec<(usize, String)> },

    #[error("sparsity pattern mismatch: {0}")]
    PatternMismatch(String),

    #[error("empty basis: every column was dropped as linearly dependent")]
    EmptyBasis,

    #[error("Gramian is ill-conditioned even with jitter {jitter:e}")]
    IllConditionedGramian { jitter: f64 },

    #[error("reduced solve failed: {reason} (condition estimate {condition:e})")]
    ReducedSolve { reason: String, condition: f64 },

    #[error("zero reference norm in relative error")]
    ZeroNorm,

    #[error("artifact format: {0}")]
    Format(String),

    #[error("artifact version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated artifact inside section `{section}`")]
    Truncated { section: String },

    #[error("artifact failed validation: {0}")]
    Corrupt(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to usage or IO problems).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverFailure { .. }
                | Error::NonConvergence { .. }
                | Error::SweepFailure { .. }
                | Error::EmptyBasis
                | Error::IllConditionedGramian { .. }
                | Error::ReducedSolve { .. }
                | Error::ZeroNorm
        )
    }
}
