//! The attentive auxiliary feature network.

mod accounting;
mod block;
mod config;
mod network;

pub use accounting::{LayerInfo, DEFAULT_HR_RESOLUTION};
pub use block::{AafBlock, BlockTrace};
pub use config::{Ablation, ModelConfig, Variant, HEAD_KERNELS, RES_INTERNAL_CHANNELS, SUPPORTED_SCALES};
pub use network::{lambda_csv, LambdaTriple, Model, ModelTrace};
