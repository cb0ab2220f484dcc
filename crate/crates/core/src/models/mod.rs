//! The three model families: linear conv nets, the one-hidden-layer ReLU conv
//! net with fixed sign outputs, and the 2D mini autoencoder.

pub mod autoencoder;
pub mod gradcheck;
pub mod linear;
pub mod relu_net;

pub use autoencoder::{AutoencoderConfig, ConvAutoencoder, HintConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use linear::LinearConvNet;
pub use relu_net::{PatchSet, ReluConvNet, ScaleMode};
