use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at node {index} (w = {node})")]
    Evaluation {
        index: usize,
        node: Complex64,
        value: Complex64,
    },

    #[error("point {0} lies outside the closed unit disc")]
    OutOfDomain(Complex64),

    #[error("map is not an almost complex structure: |J^2 + I| = {defect:e}")]
    NotAStructure { defect: f64 },

    #[error("J is not in generic position: det(J_st + J) vanishes (smallest singular value {sigma_min:e})")]
    NonGeneric { sigma_min: f64 },

    #[error("matrix is not admissible: |det(I - A conj(A))| = {margin:e}")]
    Inadmissible { margin: f64 },

    #[error("pullback is singular at {point:?}: condition number {condition:e} exceeds cap")]
    SingularPullback { point: [Complex64; 2], condition: f64 },

    #[error("phase of 0 is undefined")]
    UndefinedPhase,

    #[error("function vanishes on the boundary circle (min modulus {min_modulus:e})")]
    BoundaryZero { min_modulus: f64 },

    #[error("not a generalized analytic function: Vekua residual {residual:e} exceeds {threshold:e}")]
    NotGeneralizedAnalytic { residual: f64, threshold: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("orientation condition fails: |g| exceeds |f| by ratio {ratio:.6} at w = {w} (slice z = {z})")]
    Orientation { z: Complex64, w: Complex64, ratio: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("no convergence after {iterations} iterations (last update {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ellipticity violated: |a| = {value:.6} exceeds bound {bound:.6}")]
    Ellipticity { value: f64, bound: f64 },

    #[error("degenerate Jacobian: min(|z_zeta|^2 - |z_zetabar|^2) = {jacobian_min:e}")]
    DegenerateJacobian { jacobian_min: f64 },

    #[error("sweep failed at radius {radius}: {source}")]
    Sweep {
        radius: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, stable across versions.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Evaluation { .. } => "evaluation",
            Error::OutOfDomain(_) => "out-of-domain",
            Error::NotAStructure { .. } => "not-a-structure",
            Error::NonGeneric { .. } => "non-generic-position",
            Error::Inadmissible { .. } => "inadmissible",
            Error::SingularPullback { .. } => "singular-pullback",
            Error::UndefinedPhase => "undefined-phase",
            Error::BoundaryZero { .. } => "boundary-zero",
            Error::NotGeneralizedAnalytic { .. } => "not-generalized-analytic",
            Error::HypothesisViolation(_) => "hypothesis-violation",
            Error::Orientation { .. } => "orientation",
            Error::RootFinding(_) => "root-finding",
            Error::DegenerateFit(_) => "degenerate-fit",
            Error::NoConvergence { .. } => "no-convergence",
            Error::Ellipticity { .. } => "ellipticity",
            Error::DegenerateJacobian { .. } => "degenerate-jacobian",
            Error::Sweep { source, .. } => source.kind(),
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// The innermost error, looking through sweep annotations.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Sweep { source, .. } => source.root_cause(),
            e => e,
        }
    }
}
