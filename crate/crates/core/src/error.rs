use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum FioError {
    #[error("expected a function on the {expected} side, got {found}")]
    SideMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("shift {value} is not a multiple of the grid step {step}")]
    OffLattice { value: f64, step: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("not a frame on this grid (A = {lower:e}, B = {upper:e})")]
    NotAFrame { lower: f64, upper: f64 },
    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("Newton iteration did not converge (last residual {residual:e})")]
    NewtonDiverged { residual: f64 },
    #[error("mixed Hessian determinant {det:e} below the admissible bound {bound:e}")]
    ConditionViolation { det: f64, bound: f64 },
    #[error("spectral mass {mass:e} at the band edge exceeds the aliasing limit")]
    Aliasing { mass: f64 },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("caustic: upper-left block is singular (det = {det:e})")]
    Caustic { det: f64 },
    #[error("dilation factor {0} cannot be applied exactly on the grid")]
    NonRepresentableDilation(f64),
    #[error("unknown catalog entry: {0}")]
    UnknownName(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FioError {
    /// Stable machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            FioError::SideMismatch { .. } => "side-mismatch",
            FioError::GridMismatch(_) => "grid-mismatch",
            FioError::OffLattice { .. } => "off-lattice",
            FioError::InvalidGrid(_) => "invalid-grid",
            FioError::InvalidLattice(_) => "invalid-lattice",
            FioError::NotAFrame { .. } => "not-a-frame",
            FioError::ShapeMismatch { .. } => "shape-mismatch",
            FioError::NewtonDiverged { .. } => "newton-diverged",
            FioError::ConditionViolation { .. } => "condition-violation",
            FioError::Aliasing { .. } => "aliasing",
            FioError::NonFinite(_) => "non-finite",
            FioError::Singular(_) => "singular",
            FioError::Caustic { .. } => "caustic",
            FioError::NonRepresentableDilation(_) => "non-representable-dilation",
            FioError::UnknownName(_) => "unknown-name",
            FioError::Parse(_) => "parse",
            FioError::Io(_) => "io",
            FioError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, FioError>;
