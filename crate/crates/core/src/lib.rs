//! Decomposition of unitary matrices into interlaced DFrFT / phase-layer
//! circuits, with tools for studying auto-calibration against perturbed
//! mixing layers and resilience to stuck phase shifters.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod numerics;
pub mod optimizer;
pub mod plot;
pub mod sampling;

pub use error::{Error, Result};
