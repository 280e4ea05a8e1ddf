//! Finite-element kernels for the linear relaxed micromorphic continuum.
//!
//! The unknowns are a displacement `u` (vector Lagrange elements) and a
//! micro-distortion tensor `P` whose rows are discretised with lowest-order
//! Nédélec edge elements. Non-homogeneous Dirichlet data on `u` and
//! tangential data on the rows of `P` are removed by lifting, after which the
//! homogeneous problem is solved on the reduced (boundary-eliminated) system.
//!
//! The crate is `no_std` and only needs `alloc`; IO lives in the companion
//! `micromorph` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]
// `!(x > 0.0)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod boundary;
pub mod cases;
pub mod dynamic_solver;
pub mod error;
pub mod extension;
pub mod linalg;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod sparse;
pub mod spaces;
pub mod static_solver;
pub mod verification;

pub use error::{Error, Result};

/// Points and vectors in physical space.
pub type Vec3 = nalgebra::Vector3<f64>;
/// Second-order tensors; row `i` of a micro-distortion is `P_i`.
pub type Mat3 = nalgebra::Matrix3<f64>;
