use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("undefined causal class: zero vector")]
    ZeroVector,
    #[error("metric degenerate at queried point (condition number > {0:.3e})")]
    DegenerateMetric(f64),
    #[error("metric is not in -dt^2 + h form at the initial slice")]
    NotNormalForm,
    #[error("unknown registry id `{0}`")]
    UnknownRegistryId(String),
    #[error("bad registry parameters for `{id}`: {reason}")]
    BadRegistryParams { id: String, reason: String },
    #[error("integration unreliable: null-constraint drift {drift:.3e} exceeds budget {budget:.3e}")]
    IntegrationUnreliable { drift: f64, budget: f64 },
    #[error("geodesic trapped in the support box over the traced interval")]
    TrappedGeodesic,
    #[error("outside invertibility neighborhood: Newton residual {residual:.3e} after {iterations} iterations")]
    OutsideInvertibility { residual: f64, iterations: usize },
    #[error("outside solvable neighborhood for q(zeta)")]
    OutsideSolvableNeighborhood,
    #[error("coverage violation: {0}")]
    CoverageViolation(String),
    #[error("zero spatial covector part: plane undefined")]
    ZeroXi,
    #[error("plane conormal is not spacelike (xi parallel to theta(q))")]
    NotTimelikePlane,
    #[error("surface gradient vanishes at the queried point")]
    GradientVanishes,
    #[error("no lightlike tangent directions: surface is not timelike at the point")]
    NoLightlikeTangents,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("sinogram row error at theta index {index}: {source}")]
    SinogramRow {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed LRTF file: {0}")]
    MalformedLrtf(String),
}

pub type Result<T> = std::result::Result<T, Error>;
