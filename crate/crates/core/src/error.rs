use thiserror::Error;

/// Residuals recorded after each purification step: (idempotency, worst constraint).
pub type Trajectory = Vec<(f64, f64)>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric: |A[{row}][{col}] - A[{col}][{row}]| = {deviation:e}")]
    Asymmetric {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error(
        "eigen-solver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})"
    )]
    EigenNonConvergence { sweeps: usize, off_norm: f64 },

    #[error("overlap matrix is singular or not positive definite: eigenvalue {eigenvalue:e}")]
    SingularOverlap { eigenvalue: f64 },

    #[error("ill-conditioned constraints: Gram condition estimate {condition:e}")]
    IllConditioned { condition: f64 },

    #[error("purification did not converge in {iterations} iterations (final idempotency {:e}, constraint {:e})",
        .trajectory.last().map_or(f64::NAN, |t| t.0),
        .trajectory.last().map_or(f64::NAN, |t| t.1))]
    NonConvergence {
        iterations: usize,
        trajectory: Trajectory,
    },

    #[error("purification diverged at iteration {iteration}: |P|_F = {norm:e}")]
    Divergence { iteration: usize, norm: f64 },

    #[error("purification stagnated at the unstable eigenvalue 1/2 (iteration {iteration})")]
    Stagnation { iteration: usize },

    #[error("subspace kernel collapsed to zero (trace {trace:e}) with positive target {target}")]
    Collapse { trace: f64, target: f64 },

    #[error("kernel matrix is not idempotent (residual {residual:e})")]
    NotIdempotent { residual: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Machine-readable kind used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Asymmetric { .. } => "asymmetric",
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::EigenNonConvergence { .. } => "eigen_non_convergence",
            Error::SingularOverlap { .. } => "singular_overlap",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Divergence { .. } => "divergence",
            Error::Stagnation { .. } => "stagnation",
            Error::Collapse { .. } => "collapse",
            Error::NotIdempotent { .. } => "not_idempotent",
            Error::InvalidInput(_) => "invalid_input",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Json { .. } | Error::Asymmetric { .. } => 2,
            Error::NonConvergence { .. }
            | Error::Divergence { .. }
            | Error::Stagnation { .. }
            | Error::EigenNonConvergence { .. }
            | Error::Collapse { .. }
            | Error::NotIdempotent { .. } => 3,
            Error::IllConditioned { .. } | Error::SingularOverlap { .. } => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
