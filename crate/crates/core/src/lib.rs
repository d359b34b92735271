//! Stereo sound event localization and detection (SELD).
//!
//! The pipeline turns a stereo clip into a 7-channel pseudo first-order
//! ambisonics feature map ([`features`]), runs it through a VGG-style
//! convolutional encoder and a bidirectional selective state-space decoder
//! with optional asymmetric time/frequency convolutions ([`model`], built on
//! the scan kernels in [`ssm`]), and emits multi-track ACCDOA predictions
//! that are decoded into azimuth/distance events ([`labels`]) and scored
//! with location-aware detection metrics ([`metrics`]). [`train`] holds the
//! optimizer, scheduler, synthetic scene generator and training loop.

pub mod config;
pub mod error;
pub mod features;
pub mod fsio;
pub mod gradcheck;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use error::{Result, SeldError};
