//! Dense-tensor reverse-mode automatic differentiation on 64-bit floats.
//!
//! Computation is recorded on a [`Tape`]: leaves are constants or leased
//! parameters, ops append nodes in forward order, and [`Tape::backward`]
//! replays the node list in exact reverse order. One tape serves one forward
//! pass; independent tapes may run concurrently, while parameter updates are
//! applied outside the tape through [`Adam`].
//!
//! Matrix products are backed by `matrixmultiply`; everything else is plain
//! slice arithmetic, single-threaded and bit-deterministic.

mod adam;
pub mod blob;
pub mod check;
mod error;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::Adam;
pub use error::{AdError, Result};
pub use params::{GradMap, ParamSet};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
