//! Spectral-element solver for steady channel flow past a curved
//! constriction, with a POD/MDEIM reduced-order model over the
//! (viscosity, wall curvature) parameter plane.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod geometry;
pub mod sem;
pub mod steady;
pub mod pod;
pub mod mdeim;
pub mod rom;
pub mod store;
pub mod plot;
pub mod pipeline;

pub use error::{Error, Result};
