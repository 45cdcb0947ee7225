//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Define-by-run: each forward pass records a graph of matrix ops, and
//! [`Var::backward`] propagates gradients through it in reverse creation
//! order. The graph is freed when its handles drop; training loops build
//! a fresh graph per step. All arithmetic is 64-bit.

mod gradcheck;
mod optim;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use optim::{
    clip_global_norm, early_stop, step, Checkpoint, OptimizerConfig, OptimizerKind,
    OptimizerState, CHECKPOINT_FORMAT,
};
pub use tensor::{Graph, Tensor, Var};
