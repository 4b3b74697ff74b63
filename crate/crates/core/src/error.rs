use thiserror::Error;

use crate::geodesics::GeodesicPath;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("curvature parameter must be finite, got {0}")]
    InvalidKappa(f64),

    #[error("no cut point: lambda^2 + kappa = {0} is not positive")]
    NoCutPoint(f64),

    /// The ray left the disk model of the hyperbolic chart.
    #[error("geodesic left the chart at arclength {s_exit}")]
    ChartExit {
        s_exit: f64,
        partial: Box<GeodesicPath>,
    },

    #[error("point is not in the model: {0}")]
    NotInModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("no admissible sphere: {0}")]
    NoAdmissibleSphere(String),

    #[error("i/o failure: {0}")]
    Io(String),

    #[error("finite-difference step too large: extrapolants {0} and {1} disagree")]
    StepTooLarge(f64, f64),
}

pub type Result<T> = std::result::Result<T, GeomError>;
