//! Contrastive instance discrimination at desk scale.
//!
//! A momentum-encoder contrastive learner with a FIFO negative queue, plus the
//! tooling to rank negatives by difficulty, train with only some difficulty
//! bands (or without them), and analyse what the hard and easy negatives look
//! like afterwards.
//!
//! Module map:
//! - [`numerics`]: dense matrices, seeded RNG, SGD with momentum, gradient checking
//! - [`encoder`]: MLP base network + projection head, EMA key encoder, checkpoints
//! - [`contrastive`]: InfoNCE, the negative queue, difficulty ranking, filter policies
//! - [`data`]: hierarchical Gaussian data, class trees, augmentation, CIFAR-10 ingestion
//! - [`probe`]: linear classification on frozen representations
//! - [`analysis`]: band statistics, difficulty curves, consistency histograms
//! - [`trainer`]: the pre-training loop
//! - [`experiments`]: config files, experiment presets, sweeps

pub mod analysis;
pub mod contrastive;
pub mod data;
pub mod encoder;
mod error;
pub mod experiments;
pub mod numerics;
pub mod probe;
pub mod trainer;

pub use error::{Error, Result};
