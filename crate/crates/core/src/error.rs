use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("unsupported grid mode: {0}")]
    UnsupportedMode(String),

    #[error("z = {z} lies inside the fibre band [{lo}, {hi}]")]
    SpectralBand { z: f64, lo: f64, hi: f64 },

    #[error("inconsistent threshold: w2(p, s) - z = {denominator:e} <= 0 at node {node} although z < m(p) = {m_p}")]
    InconsistentThreshold {
        node: usize,
        denominator: f64,
        m_p: f64,
    },

    #[error("singular node: {0}")]
    SingularNode(String),

    #[error("degenerate minimum of w2: smallest Hessian eigenvalue {0:e}")]
    DegenerateMinimum(f64),

    #[error("decoupling violated: cross term {magnitude:e} exceeds {tolerance:e}; use the double-cover grid")]
    DecouplingViolated { magnitude: f64, tolerance: f64 },

    #[error("inconsistency: {0}")]
    Inconsistency(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("not an eigenvalue: {0}")]
    NotAnEigenvalue(String),

    #[error("z = {z} is in a forbidden region: Delta_{alpha}(., z) changes sign across the grid")]
    ForbiddenRegion { alpha: usize, z: f64 },

    #[error("square-root domain: xi * Delta_{alpha} = {value:e} <= 0 at node {node}")]
    SqrtDomain { alpha: usize, node: usize, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::UnsupportedMode(_) => 2,
            Error::InvariantViolation(_) | Error::Inconsistency(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
