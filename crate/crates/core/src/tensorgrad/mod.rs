//! Dense-matrix reverse-mode differentiation and the Adam optimizer.
//!
//! Everything is `f64`. A [`Tape`] is rebuilt for every forward pass; ops
//! record their inputs, and [`Tape::backward`] walks the record in reverse.

mod adam;
pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use params::{BoundParams, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
