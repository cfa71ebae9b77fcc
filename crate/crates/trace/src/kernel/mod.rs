//! Dense numeric kernels: generic element type, explicit matmuls, layer
//! primitives, Adam, and finite-difference Hessian-vector products.
//!
//! All reductions run in a fixed order, so results are bitwise reproducible
//! for a given build regardless of thread count.

mod adam;
mod hvp;
mod linalg;
mod ops;
mod params;
mod real;

pub use adam::{AdamHyper, AdamState};
pub use hvp::{hvp, HvpOracle};
pub use linalg::{matmul, matmul_a_bt, matmul_at_b, matmul_at_b_acc};
pub use ops::{
    add_bias, layer_norm_backward, layer_norm_forward, relu_backward, relu_forward,
    softmax_rows, LayerNormCache,
};
pub use params::{BlockView, Layout, Params};
pub use real::Real;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: String, step: u64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty effective batch: all positions are padding")]
    EmptyBatch,
}

pub type Result<T> = std::result::Result<T, KernelError>;
