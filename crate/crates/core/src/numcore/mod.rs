//! Dense-tensor arithmetic with reverse-mode gradients, the Adam optimizer,
//! finite-difference verification, and checkpoint I/O.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub mod checkpoint;

pub use gradcheck::{grad_check, GradCheckOptions};
pub use params::{AdamConfig, ParamStore};
pub use tape::{Tape, Value, LAYER_NORM_EPS};
pub use tensor::Tensor;
