//! Near-field wideband XL-MIMO channel estimation toolkit.
//!
//! The crate is `no_std` with `alloc`. It holds the numerical core: channel
//! synthesis with spherical-wave steering vectors, closed-form correlation
//! analysis, the pilot observation model, classical estimators (LS, LMMSE,
//! polar-domain OMP/SOMP), the multi-scale attention denoiser with hand-written
//! gradients, and the diffusion posterior sampler.
//!
//! File formats, the experiment harness and the CLI live in the `nfwb` crate.
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod channel;
pub mod correlation;
pub mod diffusion;
mod error;
pub mod linalg;
pub mod linear;
pub mod metrics;
pub mod network;
pub mod observation;
pub mod rng;
pub mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64;
