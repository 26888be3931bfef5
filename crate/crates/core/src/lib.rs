//! Lightweight single-image super-resolution with attentive auxiliary
//! feature blocks.
//!
//! The crate is self-contained: a small NCHW tensor kernel with hand-written
//! backward passes ([`tensor`]), the network and its accounting ([`model`]),
//! checkpoints ([`store`]), training and evaluation ([`train`]), and image
//! handling plus PSNR/SSIM metrics ([`data`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod store;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig, Variant};
pub use tensor::{GradSlot, Shape, Tensor};
