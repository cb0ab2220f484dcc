//! Numerical laboratory for reconstruction-guided lottery-ticket pruning.
//!
//! The crate has three layers:
//!
//! * kernels — circular convolutions, pooling, patch extraction and the
//!   channelwise DFT ([`tensor`], [`spectral`]);
//! * models and training — linear conv nets, a one-hidden-layer ReLU conv
//!   net with hand-derived gradients, and a small 2D conv autoencoder with
//!   feature-map hints ([`models`], [`autoenc`], [`pruning`]);
//! * experiments — scaling-law sweeps for kernel-sum pruning, NTK-style
//!   Gram-matrix dynamics with eigenvalue and movement bounds, and the
//!   end-to-end ticket pipeline with transfer probes ([`theory`],
//!   [`pipeline`], [`data`]).
//!
//! All floating point work is `f64`; every experiment is a pure function of
//! its config and seed.

pub mod autoenc;
pub mod data;
pub mod error;
pub mod models;
pub mod params;
pub mod pipeline;
pub mod pruning;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod theory;

pub use error::{CoreError, Result};
pub use tensor::{ConvTensor, FeatureMap, Image, PatchMatrix};
