use thiserror::Error;

/// Everything the library can refuse to do.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("division by zero polynomial")]
    DivisionByZero,
    #[error("cover degree must be ≥ 1")]
    CoverDegree,
    #[error("underdetermined fit: {samples} samples for degree {degree}")]
    UnderdeterminedFit { samples: usize, degree: usize },
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("non-finite integrand at node {index} (z = {re}{im:+}i)")]
    NonFinite { index: usize, re: f64, im: f64 },
    #[error("evaluate away from branch points")]
    BranchPoint,
    #[error("basis not spanning")]
    NotSpanning,
    #[error("degenerate bimoment minor D_{index}")]
    DegenerateMinor { index: usize },
    #[error("oracle limited to n ≤ 2")]
    HeineLimit,
    #[error("band structure violated (off-band {value:e} > {bound:e})")]
    BandViolation { value: f64, bound: f64 },
    #[error("points in same fiber; identity degenerate")]
    SameFiber,
    #[error("degenerate node configuration")]
    DegenerateNodes,
    #[error("projection mismatch ({value:e})")]
    ProjectionMismatch { value: f64 },
    #[error("off support")]
    OffSupport,
    #[error("degenerate curve")]
    DegenerateCurve,
    #[error("pole of ℘")]
    PoleOfWp,
    #[error("wp_inverse did not converge after {iterations} iterations (target {target}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        target: String,
        residual: f64,
    },
    #[error("character on theta divisor")]
    ThetaDivisor,
    #[error("coincident points")]
    CoincidentPoints,
    #[error("not a polynomial — spec inconsistent (fit residual {residual:e})")]
    NotPolynomial { residual: f64 },
    #[error("degenerate (coincident branch points)")]
    DegenerateAlpha,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
