//! Laplace-domain triplet Monte Carlo for one-dimensional spin chains.
//!
//! The resolvent `R_s = ∫ E_t e^{-st} dt` of the von Neumann evolution is
//! expanded as a geometric series in the interaction superoperator and
//! sampled with weighted walkers `w |i><j|` ("triplets").

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod laplace;
pub mod model;
pub mod observables;
pub mod oracle;

pub use error::{Error, Result};
