//! Error type shared by every module of the crate.

use crate::Point;

/// Everything that can go wrong while building fields, certifying zeros or
/// running a job.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),

    #[error("domain error in `{node}`: {reason}")]
    Domain { node: String, reason: String },

    #[error("requested jet order {requested} exceeds the maximum {max}")]
    OrderTooLarge { requested: usize, max: usize },

    #[error("{what} needs jets of order {required}, only {available} available")]
    OrderTooLow {
        what: String,
        required: usize,
        available: usize,
    },

    #[error("conformal factor is not positive at {at:?} (value {value})")]
    NonpositiveConformalFactor { at: Point, value: f64 },

    #[error("degenerate tangent at curve parameter {tau}")]
    DegenerateTangent { tau: f64 },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("point (t={t}, s={s}) lies outside the collar |s| < {s_max}")]
    OutsideCollar { t: f64, s: f64, s_max: f64 },

    #[error("function is not constant on the boundary at t={t} (residual {residual:e})")]
    NotConstantOnBoundary { t: f64, residual: f64 },

    #[error("normal derivative of order {order} does not vanish on the boundary at t={t} (value {value:e})")]
    BoundaryJetNotFlat { order: usize, t: f64, value: f64 },

    #[error("field vanishes on the curve near {at:?} (|V| = {norm:e})")]
    FieldVanishesOnCurve { at: Point, norm: f64 },

    #[error("zeros are not isolated: {0}")]
    NonIsolatedZeros(String),

    #[error("evaluation budget of {0} field evaluations exceeded")]
    BudgetExceeded(u64),

    #[error("degree sum {sum} of the certificates differs from the boundary winding {boundary}")]
    DegreeMismatch { sum: i64, boundary: i64 },

    #[error("input to the Poincare-Hopf check is not guaranteed")]
    UnguaranteedInput,

    #[error("map is not symplectic at {at:?} (|det - 1| = {residual:e})")]
    NotSymplecticAtProbe { at: Point, residual: f64 },

    #[error("map is not moderate: min |2 + f_x + g_y| = {min:e} at {at:?}")]
    NotModerate { min: f64, at: Point },

    #[error("map is not the identity on the boundary (max displacement {residual:e} at {at:?})")]
    NotIdentityOnBoundary { at: Point, residual: f64 },

    #[error("Newton iteration diverged at {at:?}")]
    NewtonDivergence { at: Point },

    #[error("generating-function closedness residual {residual:e} at {at:?}")]
    ClosednessViolation { at: Point, residual: f64 },

    #[error("boundary identity violated at {at:?} (residual {residual:e})")]
    BoundaryIdentityViolation { at: Point, residual: f64 },

    #[error("denominator 4 - H_uv^2 + H_uu H_vv vanishes at {at:?}")]
    DegenerateDenominator { at: Point },

    #[error("integrator step failure at t={time}: {reason}")]
    StepFailure { time: f64, reason: String },

    #[error("a zero lies too close to the chart seam after {attempts} chart rotations")]
    SeamZero { attempts: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid job: {0}")]
    InvalidJob(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the command line front end.
    ///
    /// 2 marks violated preconditions of the input, 3 marks budget or
    /// convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded(_)
            | Error::NewtonDivergence { .. }
            | Error::StepFailure { .. }
            | Error::DegreeMismatch { .. }
            | Error::SeamZero { .. } => 3,
            _ => 2,
        }
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "SyntaxError",
            Error::UnknownIdentifier(_) => "UnknownIdentifier",
            Error::Domain { .. } => "DomainError",
            Error::OrderTooLarge { .. } => "OrderTooLarge",
            Error::OrderTooLow { .. } => "OrderTooLow",
            Error::NonpositiveConformalFactor { .. } => "NonpositiveConformalFactor",
            Error::DegenerateTangent { .. } => "DegenerateTangent",
            Error::InvalidCurve(_) => "InvalidCurve",
            Error::OutsideCollar { .. } => "OutsideCollar",
            Error::NotConstantOnBoundary { .. } => "NotConstantOnBoundary",
            Error::BoundaryJetNotFlat { .. } => "BoundaryJetNotFlat",
            Error::FieldVanishesOnCurve { .. } => "FieldVanishesOnCurve",
            Error::NonIsolatedZeros(_) => "NonIsolatedZeros",
            Error::BudgetExceeded(_) => "BudgetExceeded",
            Error::DegreeMismatch { .. } => "DegreeMismatch",
            Error::UnguaranteedInput => "UnguaranteedInput",
            Error::NotSymplecticAtProbe { .. } => "NotSymplecticAtProbe",
            Error::NotModerate { .. } => "NotModerate",
            Error::NotIdentityOnBoundary { .. } => "NotIdentityOnBoundary",
            Error::NewtonDivergence { .. } => "NewtonDivergence",
            Error::ClosednessViolation { .. } => "ClosednessViolation",
            Error::BoundaryIdentityViolation { .. } => "BoundaryIdentityViolation",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::StepFailure { .. } => "StepFailure",
            Error::SeamZero { .. } => "SeamZero",
            Error::Unsupported(_) => "Unsupported",
            Error::InvalidJob(_) => "InvalidJob",
            Error::Io(_) => "IOError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
