use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("vector length {got} does not match ambient dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid signature (s={s}, t={t}): s + t must be at least 1")]
    InvalidSignature { s: usize, t: usize },
    #[error("curvature must be strictly negative and finite, got {0}")]
    InvalidCurvature(f64),
    #[error("time block is the zero vector")]
    DegenerateTimeBlock,
    #[error("points live on different pseudo-hyperboloids")]
    SignatureMismatch,
    #[error("point is off the manifold: |<x,x>_t - beta| = {residual:e}")]
    NotOnManifold { residual: f64 },
    #[error("vector is not tangent at its base point: |<x,xi>_t| = {residual:e}")]
    NotTangent { residual: f64 },
    #[error("spherical component is not on the sphere of radius {radius}: norm {norm}")]
    NotOnSphere { radius: f64, norm: f64 },
    #[error("points are geodesically disconnected: <x,y>_t = {inner} >= |beta|")]
    Disconnected { inner: f64 },
    #[error("spherical components are antipodal; the logarithm has no unique direction")]
    Antipode,
    #[error("reference point must have a zero space block")]
    NonzeroSpaceReference,
    #[error("{0}")]
    Invalid(String),
}

pub type GeomResult<T> = Result<T, GeomError>;
