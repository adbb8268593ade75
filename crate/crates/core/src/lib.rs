//! Weighted matrix factorization for implicit-feedback recommendation.
//!
//! The numerical core is matrix-free: weight matrices `W = (α − 1)X + 1` are
//! never formed, and every weighted product is split into a dense part plus a
//! sampled product evaluated on the nonzeros of `X`.

pub mod dense;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gram;
pub mod oracle;
pub mod parallel;
pub mod pcg;
pub mod sparse;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
