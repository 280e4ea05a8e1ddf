use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::assembly::ParamViolation;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A box specification with a non-positive length or subdivision.
    InvalidSpec(String),
    /// An argument outside the domain of an operation.
    Domain(String),
    /// Material parameters violating the admissibility inequalities.
    InvalidParams(Vec<ParamViolation>),
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    Factorization(&'static str),
    Eigen(&'static str),
    /// Initial data that does not match the boundary data at `t = 0`.
    Incompatible(String),
    Step {
        step: usize,
        source: Box<Error>,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidSpec(msg) => write!(f, "invalid box specification: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::InvalidParams(violations) => {
                write!(f, "material parameters violate")?;
                for (k, v) in violations.iter().enumerate() {
                    let sep = if k == 0 { " " } else { ", " };
                    write!(f, "{sep}{}", v.inequality())?;
                }
                Ok(())
            }
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "{what}: expected length {expected}, found {found}"),
            Error::NotConverged {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (relative residual {residual:e})"
            ),
            Error::Factorization(what) => write!(f, "factorization of {what} failed"),
            Error::Eigen(what) => write!(f, "eigensolver failed: {what}"),
            Error::Incompatible(msg) => write!(f, "incompatible data: {msg}"),
            Error::Step { step, source } => write!(f, "time step {step}: {source}"),
        }
    }
}

impl core::error::Error for Error {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            Error::Step { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}
