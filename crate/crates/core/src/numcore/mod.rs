//! Dense `f64` kernels and a small reverse-mode tape.

mod matrix;
mod ops;
mod tape;

pub use matrix::Matrix;
pub use ops::{
    attention, attention_metered, cosine, dot, log_sum_exp, matmul, matmul_transb, norm, softmax,
    ComputeMeter,
};
pub use tape::{GradTape, Gradients, Var};
