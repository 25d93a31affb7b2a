//! Small convolutional autoencoder built from scratch: 3x3 same-padded
//! convolutions, ReLU/sigmoid activations, 2x2 max pooling and nearest
//! neighbour upsampling, with reverse-mode gradients, ADAM and a piecewise
//! constant learning-rate schedule.
//!
//! All arithmetic is `f64`. Parameters live in one flat vector; per layer the
//! weights `[out][in][3][3]` come first, then `out` biases.

mod adam;
mod net;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use net::{
    decode_batch, encode_batch, forward, forward_layers, init_params, loss_and_grad, Activation,
    ConvNetSpec, ForwardCache, LayerSpec, Resample, Tensor,
};
pub use train::{
    train_autoencoder, train_end_to_end, train_supervised, LrPhase, TrainConfig, TrainOutcome,
};
