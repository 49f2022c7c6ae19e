//! Numerical substrate: dense tensors, GRU cells with hand-derived
//! backpropagation, affine readout, dropout and Adam.

mod adam;
mod dropout;
mod gru;
mod linear;
mod tensor;

pub use adam::AdamState;
pub use dropout::dropout_mask;
pub use gru::{
    gru_stack_forward, GruCellCache, GruCellParams, GruStackParams, StackStepCache,
    GRU_TENSOR_NAMES,
};
pub use linear::{LinearParams, Readout, ReadoutCache};
pub use tensor::{axpy, dot, sigmoid, Tensor2};
