//! A deliberately small neural toolkit: dense tensors, a named parameter
//! registry, and a handful of layers (embedding lookup, character CNN with
//! max-pooling, LSTM / BiLSTM, two-layer MLP) whose backward passes are
//! written out by hand.
//!
//! There is no tape or graph. Each layer's `forward` returns its output and a
//! cache, and `backward` consumes that cache to accumulate parameter gradients
//! into a [`Grads`] buffer and return the gradient for the layer input. Every
//! layer is generic over [`Real`] so the same code runs in `f32` for training
//! and `f64` for finite-difference checks (see [`gradcheck`]).

mod adam;
mod error;
pub mod gradcheck;
pub mod init;
mod layers;
mod ops;
mod params;
mod real;
mod tensor;
pub mod wordvec;

pub use adam::{Adam, AdamConfig};
pub use error::{NeuralError, Result};
pub use layers::{BiLstm, BiLstmCache, CharCnn, CharCnnCache, Embedding, Linear, Lstm, LstmCache, Mlp, MlpCache};
pub use ops::{
    axpy, cosine, cosine_backward, cross_entropy, dot, dropout, softmax, softmax_cross_entropy_grad, DropoutMask,
};
pub use params::{GradEntry, Grads, ParamStore};
pub use real::Real;
pub use tensor::Tensor;
