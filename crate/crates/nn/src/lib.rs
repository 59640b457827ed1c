//! Minimal differentiable kernel for the terrain predictor.
//!
//! Everything is 64-bit, row-major and explicit: every layer exposes a
//! forward function and a matching backward function, and callers compose
//! backward passes in reverse order themselves. There is no tape.
//!
//! Image tensors use `[H, W, C]` (or batched `[B, H, W, C]`) layout and
//! convolution kernels use `[Kh, Kw, Cin, Cout]`.

mod adam;
mod conv;
mod dense;
mod dropout;
mod error;
mod gemm;
mod loss;
mod lstm;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_backward, conv_output_extent, ConvGeometry};
pub use dense::{dense, dense_backward};
pub use dropout::{dropout, dropout_backward, DropoutOutput};
pub use error::{NnError, Result};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_batch, CrossEntropy};
pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmGradient, LstmParams};
pub use tensor::{relu, relu_backward, tanh, tanh_backward, LayerGradient, Tensor};
