use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of mesh generation, the finite-element solves and the
/// fixed-point construction.
///
/// `name()` gives a stable machine-readable identifier; the command-line tool
/// prints it and the run summary records it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid Omega: {0}")]
    InvalidOmega(String),
    #[error("Omega is too close to the boundary: clearance {clearance} < {required}")]
    OmegaTooCloseToBoundary { clearance: f64, required: f64 },
    #[error("degenerate element {element}: Jacobian {jacobian:e}")]
    DegenerateElement { element: usize, jacobian: f64 },
    #[error("invalid mesh parameters: {0}")]
    InvalidMeshParameters(String),
    #[error("no quadrature rule of degree {0}")]
    UnsupportedDegree(usize),

    #[error("invalid electrode configuration: {0}")]
    InvalidElectrodes(String),
    #[error("potential evaluated at electrode {electrode} (point {point:?})")]
    EvalAtElectrode { electrode: usize, point: [f64; 2] },
    #[error("conformal map is degenerate at {point:?} (|derivative| = {derivative:e})")]
    MapDegenerate { point: [f64; 2], derivative: f64 },

    #[error("nonpositive conductivity {value:e} at {point:?}")]
    NonpositiveConductivity { value: f64, point: [f64; 2] },
    #[error("perturbation is nonzero ({value:e}) outside Omega at {point:?}")]
    SupportViolation { value: f64, point: [f64; 2] },
    #[error("load is not orthogonal to constants (sum {sum:e})")]
    IncompatibleLoad { sum: f64 },
    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Gram matrix is numerically singular: pivot {pivot:e} below {threshold:e}")]
    GramSingular { pivot: f64, threshold: f64 },
    #[error("seed perturbation lies in the span of the dual basis (residual ratio {ratio:e})")]
    SeedInSpan { ratio: f64 },
    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("conductivity {value:e} below floor {floor:e} at {point:?}")]
    PositivityViolation { value: f64, point: [f64; 2], floor: f64 },
    #[error("divergence persisted after {0} epsilon backoffs")]
    MaxBackoffsExceeded(usize),
    #[error("current vector is not mean-free (sum {0:e})")]
    NotMeanFree(f64),
    #[error("invalid run configuration: {0}")]
    InvalidRunConfig(String),

    #[error("electrode arc {electrode} is not resolved by boundary nodes")]
    ArcsNotResolved { electrode: usize },
    #[error("invalid CEM electrodes: {0}")]
    InvalidCemElectrodes(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidOmega(_) => "INVALID_OMEGA",
            Error::OmegaTooCloseToBoundary { .. } => "OMEGA_TOO_CLOSE_TO_BOUNDARY",
            Error::DegenerateElement { .. } => "DEGENERATE_ELEMENT",
            Error::InvalidMeshParameters(_) => "INVALID_MESH_PARAMETERS",
            Error::UnsupportedDegree(_) => "UNSUPPORTED_DEGREE",
            Error::InvalidElectrodes(_) => "INVALID_ELECTRODES",
            Error::EvalAtElectrode { .. } => "EVAL_AT_ELECTRODE",
            Error::MapDegenerate { .. } => "MAP_DEGENERATE",
            Error::NonpositiveConductivity { .. } => "NONPOSITIVE_CONDUCTIVITY",
            Error::SupportViolation { .. } => "SUPPORT_VIOLATION",
            Error::IncompatibleLoad { .. } => "INCOMPATIBLE_LOAD",
            Error::NoConvergence { .. } => "NO_CONVERGENCE",
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::GramSingular { .. } => "GRAM_SINGULAR",
            Error::SeedInSpan { .. } => "SEED_IN_SPAN",
            Error::Expression { .. } => "EXPRESSION_ERROR",
            Error::PositivityViolation { .. } => "POSITIVITY_VIOLATION",
            Error::MaxBackoffsExceeded(_) => "MAX_BACKOFFS_EXCEEDED",
            Error::NotMeanFree(_) => "NOT_MEAN_FREE",
            Error::InvalidRunConfig(_) => "INVALID_RUN_CONFIG",
            Error::ArcsNotResolved { .. } => "ARCS_NOT_RESOLVED",
            Error::InvalidCemElectrodes(_) => "INVALID_CEM_ELECTRODES",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Validation { .. } => "VALIDATION_ERROR",
            Error::MissingArtifact(_) => "MISSING_ARTIFACT",
            Error::Io(_) => "IO_ERROR",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
