//! Differentiable numerical kernels: a dense matrix type, a reverse-mode
//! tape, parameterized layers, an optimizer, checkpoints and a
//! finite-difference gradient checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, kernel_suite, relative_error, KERNEL_STEP};
pub use graph::{GradBuffer, Gradients, Graph, Var};
pub use optim::Adam;
pub use params::{InitSpec, ParamId, ParamKind, ParamStore, Parameter};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
