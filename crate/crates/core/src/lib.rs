// `!(x > 0.0)` is used on purpose: NaN must fail these checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod sampling;
pub mod state;
mod tridiag;

pub use error::{Error, Result};
