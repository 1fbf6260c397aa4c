//! Reverse-mode differentiation over dense tensors.
//!
//! Forward values are computed eagerly as primitives are recorded on a
//! [`Tape`]; [`Tape::backward`] then sweeps the tape in reverse to produce
//! gradients. Sparse operands of [`Tape::sparse_matmul`] are constants.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_scaled, GradCheckReport};
pub use tape::{Axis, Gradients, NodeId, Tape, FROBENIUS_GUARD};
pub use tensor::Tensor;

pub(crate) use tape::asym_abs;
pub(crate) use tensor::gemm;
