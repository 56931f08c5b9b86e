//! Multi-step actor-critic learning with Lyapunov certificates.
//!
//! This crate holds everything that does not touch the operating system:
//! the six benchmark dynamics behind a uniform environment contract, a
//! small batched reverse-mode autodiff tape with MLP building blocks, the
//! n-step sliding-window replay, the certificate / critic / actor / entropy
//! losses together with the update loop that drives them, and the
//! evaluation metrics (reach rate, reach step, hold step, exponential
//! envelope checks).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the companion `msacl` crate.

#![no_std]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod autodiff;
pub mod env;
pub mod error;
pub mod eval;
pub mod learner;
pub mod math;
pub mod nn;
pub mod replay;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
