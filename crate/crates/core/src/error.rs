use alloc::string::String;
use core::fmt;

use crate::lp::LpError;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of matrices or vectors do not fit together.
    Shape(String),
    ZeroDimensional,
    /// Norming matrix has rank below the dimension.
    RankDeficient { rank: usize, dim: usize },
    NotFinite,
    /// A map that must be a contraction has a larger norm.
    NotContraction { norm: f64 },
    /// A distortion bound is violated or out of range.
    Distortion { measured: f64, allowed: f64 },
    DeltaTooLarge(f64),
    NotInjective,
    NotUnital(String),
    /// A functional or map norm exceeds the requested bound.
    NormExceeded { norm: f64, bound: f64 },
    Precondition(String),
    /// Caps or thresholds prevent the requested construction.
    Resource(String),
    Lp(LpError),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(s) => write!(f, "shape mismatch: {s}"),
            Error::ZeroDimensional => write!(f, "zero-dimensional space"),
            Error::RankDeficient { rank, dim } => {
                write!(f, "norming matrix has rank {rank} < dim {dim}")
            }
            Error::NotFinite => write!(f, "non-finite entry"),
            Error::NotContraction { norm } => write!(f, "map is not a contraction: norm {norm}"),
            Error::Distortion { measured, allowed } => {
                write!(f, "distortion {measured} exceeds {allowed}")
            }
            Error::DeltaTooLarge(d) => write!(f, "delta {d} must be < 1"),
            Error::NotInjective => write!(f, "map is not injective"),
            Error::NotUnital(s) => write!(f, "not unital: {s}"),
            Error::NormExceeded { norm, bound } => write!(f, "norm {norm} exceeds bound {bound}"),
            Error::Precondition(s) => write!(f, "precondition failed: {s}"),
            Error::Resource(s) => write!(f, "resource limit: {s}"),
            Error::Lp(e) => write!(f, "linear program: {e}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<LpError> for Error {
    fn from(e: LpError) -> Self {
        Error::Lp(e)
    }
}
