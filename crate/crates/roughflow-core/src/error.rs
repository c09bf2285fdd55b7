//! Error type shared across the crate.

use crate::geom::Point3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("the vector field is singular at the origin")]
    OriginSingularity,

    #[error("point ({},{},{}) is outside the required region ({expected})", point.x, point.y, point.z)]
    WrongRegion {
        point: Point3,
        expected: &'static str,
    },

    #[error("time {0} is outside the operation's domain")]
    BadTime(f64),

    #[error("continuation map `{0}` is not invertible")]
    NotInvertible(String),

    #[error("finite-difference stencil crosses a branch boundary near ({},{},{}) at t = {t}", point.x, point.y, point.z)]
    StencilCrossing { point: Point3, t: f64 },

    #[error("step size underflow at t = {t} near ({},{},{}): dt would fall below {dt_min}", position.x, position.y, position.z)]
    StepUnderflow {
        t: f64,
        position: Point3,
        dt_min: f64,
    },

    #[error("histogram resolution too coarse: {occupied} occupied cells, need at least {min}")]
    InsufficientResolution { occupied: usize, min: usize },

    #[error("flow image misses the reference circle by {gap:e} at theta = {theta}")]
    OffReferenceCircle { theta: f64, gap: f64 },

    #[error("empty or invalid sampling range [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag, used by the CLI's structured error report.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OriginSingularity => "origin-singularity",
            Error::WrongRegion { .. } => "wrong-region",
            Error::BadTime(_) => "bad-time",
            Error::NotInvertible(_) => "not-invertible",
            Error::StencilCrossing { .. } => "stencil-crossing",
            Error::StepUnderflow { .. } => "step-underflow",
            Error::InsufficientResolution { .. } => "insufficient-resolution",
            Error::OffReferenceCircle { .. } => "off-reference-circle",
            Error::EmptyRange { .. } => "empty-range",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Experiment(_) => "experiment",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
