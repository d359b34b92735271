//! Convolutional encoder, bidirectional Mamba decoder with optional
//! asymmetric time/frequency convolutions, and multi-ACCDOA output heads.

mod blocks;
mod checkpoint;
mod config;
mod network;

pub use blocks::{AsymmetricConvBlock, BiMambaLayer, ConvBlock};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{SeldModelConfig, ENCODER_BLOCKS};
pub use network::{count_params, decoder_macs, estimate_macs, Network, SeldModel};
