//! Variational formulas for the free energy of vector-spin spherical spin glasses.
//!
//! The crate evaluates and minimizes the discrete Parisi and Crisanti–Sommers functionals over
//! monotone paths of positive semidefinite matrices, and checks the identities relating them.

// `!(a < b)` is used on purpose so that NaN fails validation; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli_io;
pub mod continuous;
pub mod error;
pub mod functionals;
pub mod optimize;
pub mod mat_core;
pub mod path_model;
pub mod variation;

pub use error::{Result, SpinError};
