//! Discrete Birch-Magyar averages over lattice points of integral forms.
//!
//! The crate enumerates lattice shells, evaluates complete exponential sums,
//! applies single-scale and maximal averages to grid functions, rebuilds the
//! Fourier multiplier of the average from its arithmetic main term and error
//! pieces, and searches for sparse-domination certificates.

pub mod arith;
pub mod continuous;
pub mod error;
pub mod fft;
pub mod forms;
pub mod gridops;
pub mod lattice;
pub mod multiplier;
pub mod numeric;
pub mod runner;
pub mod sparse;

pub use error::{Error, Result};
pub use forms::{Cutoff, FormConstants, IntegralForm};
