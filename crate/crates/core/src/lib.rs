//! Matrix biorthogonal polynomials built from scalar data on branched covers.
//!
//! The crate is organised bottom-up: [`polyalg`] and [`quadcontour`] are the
//! numeric plumbing, [`cover0`] and [`classical`] treat polynomial covers of
//! the sphere, [`biortho`] is the scalar biorthogonalization engine, and
//! [`elliptic1`] / [`torsion`] handle the genus-one constructions.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biortho;
pub mod classical;
pub mod cover0;
pub mod elliptic1;
pub mod error;
pub mod par;
pub mod polyalg;
pub mod quadcontour;
pub mod torsion;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
