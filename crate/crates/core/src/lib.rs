//! ROI pooled correlation filter tracking.
//!
//! The filter is trained in the Fourier domain with equality constraints that force the
//! weights inside each pooling kernel to agree, which is equivalent to ROI average
//! pooling of every circularly shifted sample. Training uses ADMM with an inner
//! conjugate-gradient solve of the normal equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod constraints;
pub mod error;
pub mod features;
pub mod memory;
pub mod selftest;
pub mod solver;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
