//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass (define-by-run) and
//! [`Tape::backward`] replays the record in reverse, accumulating adjoints.
//! Tensors on the tape are addressed by lightweight [`Var`] handles; the tape
//! owns the data.  A fresh tape is built for every training step, so there is
//! no graph invalidation to reason about — build, read values, run backward,
//! drop.
//!
//! The op set is exactly what an adversarial transfer model needs: dense
//! matmul/affine, relu, row-wise softmax, (weighted) cross entropy, entropy,
//! row/column selection, elementwise arithmetic, and the gradient-reversal
//! op whose forward is the identity and whose backward multiplies the
//! upstream gradient by `-lambda`.

mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
