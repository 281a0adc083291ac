//! Dense linear algebra, GRU layers, Adam and finite-difference checking.

pub mod activation;
pub mod adam;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod matrix;

pub use activation::{sigmoid, sigmoid_scalar, tanh};
pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheckReport, TensorCheck};
pub use gru::{gru_backward, gru_forward, ForwardCache, GruCell, GruLayer, GruStack, Sequence};
pub use matrix::{dot, matmul, Matrix};
